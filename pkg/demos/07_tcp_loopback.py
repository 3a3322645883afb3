"""The same federated round over real sockets, and proof it changes nothing.

A server and two workers exchange length-prefixed frames over loopback
TCP. Training arithmetic is seed-deterministic, so the per-round
accuracies must match a simulated run of the identical configuration
bit for bit; only the clocks differ. In a real deployment each worker
runs `edgefed worker <config> --worker-id N` on its own machine.
"""

import tempfile
import threading
from pathlib import Path

from edgefed import data, demodata, fedavg, transport

corpus = Path(tempfile.mkdtemp(prefix="edgefed-corpus-"))
demodata.write_corpus(corpus, train_n=1000, test_n=200, seed=7)
train = data.load_mnist(corpus / "train-images-idx3-ubyte",
                        corpus / "train-labels-idx1-ubyte")
test = data.load_mnist(corpus / "t10k-images-idx3-ubyte",
                       corpus / "t10k-labels-idx1-ubyte")

cfg = fedavg.FedConfig(k=2, e=2, b=16, lr=0.05, target_accuracy=1.0,
                       max_rounds=3, seeds=(1,), scheme="iid", model_kind="cnn")
seed = cfg.seeds[0]
shards = fedavg.make_shards(cfg, train, seed)


def run_worker(wid, port):
    worker = fedavg.Worker(wid, shards[wid], cfg, model_seed=seed,
                           stream_seed=(seed, wid))
    client = transport.TcpWorkerClient("127.0.0.1", port, wid)
    try:
        client.connect()
        client.register()
        rounds = client.serve(worker)
        print(f"worker {wid}: served {rounds} rounds")
    finally:
        client.close()


server = transport.TcpServerTransport("127.0.0.1", 0, k=cfg.k)
print(f"server listening on 127.0.0.1:{server.port}")
threads = [
    threading.Thread(target=run_worker, args=(wid, server.port))
    for wid in range(cfg.k)
]
for t in threads:
    t.start()

server.wait_for_workers()
tcp_log = fedavg.run_until(cfg, (train, test), server, seed)
server.shutdown(tcp_log.records[-1].round)
for t in threads:
    t.join()
server.close()

sim_log = fedavg.run_until(cfg, (train, test), transport.SimTransport(seed=seed), seed)

print(f"\n{'round':>5} {'tcp acc':>9} {'sim acc':>9}")
for tcp_rec, sim_rec in zip(tcp_log.records, sim_log.records):
    print(f"{tcp_rec.round:>5} {tcp_rec.accuracy:>9.4f} {sim_rec.accuracy:>9.4f}")
match = all(t.accuracy == s.accuracy
            for t, s in zip(tcp_log.records, sim_log.records))
print(f"\nper-round accuracies identical: {match}")
