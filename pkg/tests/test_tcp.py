import csv
import socket
import struct
import subprocess
import sys
import threading

import numpy as np
import pytest

from edgefed import cli, data, fedavg, transport
from edgefed.errors import FormatError, ProtocolError
from edgefed.fedavg import FedConfig
from edgefed.transport import (
    ControlMsg,
    GlobalModelMsg,
    LocalUpdateMsg,
    TcpServerTransport,
    TcpWorkerClient,
    decode,
    encode,
    recv_frame,
    send_frame,
)

F32 = np.float32


def free_port():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    return port


def raw_register(port, wid):
    sock = socket.create_connection(("127.0.0.1", port), timeout=10)
    sock.settimeout(10)
    send_frame(sock, encode(ControlMsg(wid)))
    ack = decode(recv_frame(sock))
    assert isinstance(ack, ControlMsg) and ack.round == wid
    return sock


def mlp_fixture(seed=1):
    cfg = FedConfig(k=1, e=2, b=4, lr=0.05, model_kind="mlp")
    rng = np.random.default_rng(seed)
    images = rng.random((16, 3072), dtype=F32) * F32(0.999)
    train = data.Dataset(images, rng.integers(0, 10, 16))
    shard = data.Shard(train, np.arange(16), worker_id=0, scheme="iid")
    return cfg, shard


class TestFrames:
    def socket_pair(self):
        a, b = socket.socketpair()
        a.settimeout(5)
        b.settimeout(5)
        return a, b

    def test_round_trip(self):
        a, b = self.socket_pair()
        send_frame(a, b"hello frames")
        assert recv_frame(b) == b"hello frames"
        a.close(); b.close()

    def test_zero_length_rejected(self):
        a, b = self.socket_pair()
        a.sendall(struct.pack("<I", 0))
        with pytest.raises(FormatError, match="frame length"):
            recv_frame(b)
        a.close(); b.close()

    def test_oversize_length_rejected(self):
        a, b = self.socket_pair()
        a.sendall(struct.pack("<I", transport.MAX_FRAME_LEN + 1))
        with pytest.raises(FormatError, match="frame length"):
            recv_frame(b)
        a.close(); b.close()

    def test_close_mid_payload(self):
        a, b = self.socket_pair()
        a.sendall(struct.pack("<I", 10) + b"abc")
        a.close()
        with pytest.raises(ConnectionError, match="payload"):
            recv_frame(b)
        b.close()


class TestRegistration:
    def test_duplicate_and_out_of_range_ids_rejected(self):
        server = TcpServerTransport("127.0.0.1", 0, k=2)
        try:
            waiter = threading.Thread(target=server.wait_for_workers)
            waiter.start()
            keep = raw_register(server.port, 0)

            dup = socket.create_connection(("127.0.0.1", server.port), timeout=10)
            dup.settimeout(10)
            send_frame(dup, encode(ControlMsg(0)))
            with pytest.raises(ConnectionError):
                recv_frame(dup)
            dup.close()

            high = socket.create_connection(("127.0.0.1", server.port), timeout=10)
            high.settimeout(10)
            send_frame(high, encode(ControlMsg(7)))
            with pytest.raises(ConnectionError):
                recv_frame(high)
            high.close()

            other = raw_register(server.port, 1)
            waiter.join(timeout=10)
            assert not waiter.is_alive()
            keep.close()
            other.close()
        finally:
            server.close()

    def test_accept_timeout_names_missing_workers(self):
        server = TcpServerTransport("127.0.0.1", 0, k=2, accept_timeout_s=0.2)
        try:
            with pytest.raises(ProtocolError, match=r"workers \[0, 1\]"):
                server.wait_for_workers()
        finally:
            server.close()


class TestServedRound:
    def test_round_matches_local_compute_and_meter(self):
        cfg, shard = mlp_fixture()
        server = TcpServerTransport("127.0.0.1", 0, k=1)
        client = TcpWorkerClient("127.0.0.1", server.port, 0)
        worker = fedavg.Worker(0, shard, cfg, model_seed=1, stream_seed=(1, 0))
        served = {}

        def client_main():
            client.connect()
            client.register()
            served["rounds"] = client.serve(worker)

        thread = threading.Thread(target=client_main)
        thread.start()
        try:
            server.wait_for_workers()
            weights = fedavg.init_global("mlp", 1)
            updates = server.execute_round(1, weights, [], cfg)
            server.shutdown(1)
        finally:
            thread.join(timeout=30)
            client.close()
            server.close()

        assert served["rounds"] == 1
        update = updates[0]
        assert update.round == 1 and update.sample_count == cfg.e * cfg.b
        assert update.compute_ms >= 0 and update.recv_ms >= 0

        replica = fedavg.Worker(0, shard, cfg, model_seed=1, stream_seed=(1, 0))
        assert update.weights == replica.run_local(1, weights).weights

        down = len(encode(GlobalModelMsg(1, weights)))
        up = len(encode(update))
        assert server.meter.round_received(0, 1) == down
        assert server.meter.round_sent(0, 1) == up

    def run_misbehaving_round(self, client_script):
        """Register one raw client, run its script from a thread during the
        round, and return what execute_round raised."""
        cfg, _ = mlp_fixture()
        server = TcpServerTransport("127.0.0.1", 0, k=1)
        try:
            waiter = threading.Thread(target=server.wait_for_workers)
            waiter.start()
            sock = raw_register(server.port, 0)
            waiter.join(timeout=10)

            misbehave = threading.Thread(target=client_script, args=(sock,))
            misbehave.start()
            weights = fedavg.init_global("mlp", 1)
            with pytest.raises(ProtocolError) as info:
                server.execute_round(1, weights, [], cfg)
            misbehave.join(timeout=10)
            sock.close()
            return info.value
        finally:
            server.close()

    def test_worker_death_aborts_round_naming_worker(self):
        def die_after_broadcast(sock):
            recv_frame(sock)
            sock.close()

        exc = self.run_misbehaving_round(die_after_broadcast)
        assert "worker 0" in str(exc) and "no update for round 1" in str(exc)

    def test_stale_round_update_rejected(self):
        def answer_with_round_5(sock):
            msg = decode(recv_frame(sock))
            send_frame(sock, encode(LocalUpdateMsg(5, msg.weights, sample_count=8)))

        exc = self.run_misbehaving_round(answer_with_round_5)
        assert "round 5" in str(exc) and "round 1" in str(exc)

    def test_non_update_message_rejected(self):
        def answer_with_control(sock):
            recv_frame(sock)
            send_frame(sock, encode(ControlMsg(1)))

        exc = self.run_misbehaving_round(answer_with_control)
        assert "expected a LocalUpdate" in str(exc)


class TestCliEquivalence:
    @pytest.fixture
    def configs(self, tmp_path, corpus_dir):
        def body(mode_lines):
            return "\n".join(
                [
                    "[experiment]",
                    "model = cnn", "k = 2", "e = 1", "b = 4", "lr = 0.05",
                    "target_accuracy = 0.99", "max_rounds = 2", "seeds = 3",
                    "subsample_train = 200",
                    "[data]",
                    f"train_images = {corpus_dir / 'train-images-idx3-ubyte'}",
                    f"train_labels = {corpus_dir / 'train-labels-idx1-ubyte'}",
                    f"test_images = {corpus_dir / 't10k-images-idx3-ubyte'}",
                    f"test_labels = {corpus_dir / 't10k-labels-idx1-ubyte'}",
                    *mode_lines,
                ]
            ) + "\n"

        sim_cfg = tmp_path / "sim.ini"
        sim_cfg.write_text(body(["[output]", "dir = sim_out"]))
        port = free_port()
        tcp_cfg = tmp_path / "tcp.ini"
        tcp_cfg.write_text(
            body(["[transport]", "mode = tcp", "host = 127.0.0.1", f"port = {port}",
                  "[output]", "dir = tcp_out"])
        )
        return sim_cfg, tcp_cfg, tmp_path

    def test_tcp_run_reproduces_sim_accuracies(self, configs):
        sim_cfg, tcp_cfg, tmp_path = configs
        assert cli.main(["run", str(sim_cfg)]) == 3  # 0.99 unreachable in 2 rounds

        server_rc = {}
        server = threading.Thread(
            target=lambda: server_rc.update(rc=cli.main(["run", str(tcp_cfg)]))
        )
        server.start()
        workers = [
            subprocess.Popen(
                [sys.executable, "-m", "edgefed", "worker", str(tcp_cfg),
                 "--worker-id", str(wid)],
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
            )
            for wid in range(2)
        ]
        outs = [w.communicate(timeout=120) for w in workers]
        server.join(timeout=120)
        assert not server.is_alive()
        assert server_rc["rc"] == 3
        for w, (out, err) in zip(workers, outs):
            assert w.returncode == 0, err
            assert "done after 2 rounds" in out

        def rows(path):
            with open(path, newline="") as fh:
                return [
                    (r["seed"], r["round"], r["accuracy"], r["cum_bytes"])
                    for r in csv.DictReader(fh)
                ]

        sim_rows = rows(tmp_path / "sim_out" / "runs.csv")
        tcp_rows = rows(tmp_path / "tcp_out" / "runs.csv")
        assert len(sim_rows) == 2
        assert sim_rows == tcp_rows
