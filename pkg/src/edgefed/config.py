"""Experiment configuration files: a flat INI layout with four sections.

    [experiment]  model, scheme, pairs, k, e, b, lr, target_accuracy,
                  max_rounds, seeds, stop_at_target, subsample_train
    [data]        train_images, train_labels, test_images, test_labels
    [transport]   mode (sim|tcp); sim: base_latency_ms,
                  bandwidth_bytes_per_ms, jitter, compute_source,
                  compute_ms_per_batch, compute_multipliers,
                  compute_jitter; tcp: host, port
    [output]      dir

Relative paths resolve against the config file's directory, so a config
stays valid wherever it is invoked from. The EDGEFED_OUT_DIR environment
variable overrides [output] dir; nothing else is overridable.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .fedavg import DEFAULT_PAIRS, FedConfig
from .transport import LinkModel

TRANSPORT_MODES = ("sim", "tcp")


@dataclass
class ExperimentConfig:
    fed: FedConfig
    train_images: Path
    train_labels: Path
    test_images: Path
    test_labels: Path
    link: LinkModel
    transport_mode: str
    host: str
    port: int
    out_dir: Path
    subsample_train: int = 0


class _Section:
    """Typed accessors over one INI section with field-naming errors."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self._section = parser[name] if parser.has_section(name) else {}

    def _fail(self, key: str, reason: str):
        raise ValidationError(f"[{self.name}] {key}: {reason}")

    def raw(self, key: str, default=None, required: bool = False):
        if key in self._section:
            return self._section[key].strip()
        if required:
            self._fail(key, "missing required key")
        return default

    def typed(self, key: str, cast, typename: str, default=None, required: bool = False):
        raw = self.raw(key, required=required)
        if raw is None:
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError):
            self._fail(key, f"expected {typename}, got {raw!r}")

    def integer(self, key, default=None, required=False):
        return self.typed(key, int, "an integer", default, required)

    def number(self, key, default=None, required=False):
        return self.typed(key, float, "a number", default, required)

    def flag(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return default
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        self._fail(key, f"expected a boolean, got {raw!r}")

    def int_list(self, key, default=None, required=False):
        raw = self.raw(key, required=required)
        if raw is None:
            return default
        try:
            return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        except ValueError:
            self._fail(key, f"expected comma-separated integers, got {raw!r}")

    def float_list(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return default
        try:
            return tuple(float(part.strip()) for part in raw.split(",") if part.strip())
        except ValueError:
            self._fail(key, f"expected comma-separated numbers, got {raw!r}")

    def pairs(self, key, default=None):
        raw = self.raw(key)
        if raw is None:
            return default
        out = []
        for part in raw.split(","):
            part = part.strip()
            if not part:
                continue
            halves = part.split("-")
            if len(halves) != 2:
                self._fail(key, f"expected pairs like 0-1,2-3, got {part!r}")
            try:
                out.append((int(halves[0]), int(halves[1])))
            except ValueError:
                self._fail(key, f"expected pairs like 0-1,2-3, got {part!r}")
        if not out:
            self._fail(key, "expected at least one pair")
        return tuple(out)


def load_config(path) -> ExperimentConfig:
    """Parse and validate one experiment config file.

    Every failure raises a ValidationError naming the section and key.
    Referenced data files must exist at load time.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ValidationError(f"config file {path} is not valid INI: {exc}")

    experiment = _Section(parser, "experiment")
    data = _Section(parser, "data")
    transport = _Section(parser, "transport")
    output = _Section(parser, "output")

    fed = FedConfig(
        k=experiment.integer("k", 5),
        e=experiment.integer("e", 10),
        b=experiment.integer("b", 16),
        lr=experiment.number("lr", 0.05),
        target_accuracy=experiment.number("target_accuracy", 0.95),
        max_rounds=experiment.integer("max_rounds", 50),
        seeds=experiment.int_list("seeds", (1,)),
        scheme=experiment.raw("scheme", "iid"),
        model_kind=experiment.raw("model", "cnn"),
        pairs=experiment.pairs("pairs", DEFAULT_PAIRS),
        stop_at_target=experiment.flag("stop_at_target", True),
    )
    subsample_train = experiment.integer("subsample_train", 0)
    if subsample_train < 0:
        raise ValidationError(
            f"[experiment] subsample_train: must be >= 0, got {subsample_train}"
        )

    base = path.parent

    def data_path(key: str) -> Path:
        value = data.raw(key, required=True)
        resolved = (base / value).resolve() if not os.path.isabs(value) else Path(value)
        if not resolved.is_file():
            raise ValidationError(f"[data] {key}: file not found: {resolved}")
        return resolved

    paths = {key: data_path(key) for key in
             ("train_images", "train_labels", "test_images", "test_labels")}

    mode = transport.raw("mode", "sim")
    if mode not in TRANSPORT_MODES:
        raise ValidationError(
            f"[transport] mode: expected one of {TRANSPORT_MODES}, got {mode!r}"
        )
    multipliers = {}
    mult_list = transport.float_list("compute_multipliers")
    if mult_list is not None:
        if len(mult_list) != fed.k:
            raise ValidationError(
                f"[transport] compute_multipliers: {len(mult_list)} values for k={fed.k}"
            )
        multipliers = {i: m for i, m in enumerate(mult_list)}
    try:
        link = LinkModel(
            base_latency_ms=transport.number("base_latency_ms", 5.0),
            bandwidth_bytes_per_ms=transport.number("bandwidth_bytes_per_ms", 37_500.0),
            jitter=transport.number("jitter", 0.0),
            compute_multipliers=multipliers,
            compute_jitter=transport.number("compute_jitter", 0.0),
            compute_source=transport.raw("compute_source", "modeled"),
            compute_ms_per_batch=transport.number("compute_ms_per_batch", 375.0),
        )
    except ValidationError as exc:
        raise ValidationError(f"[transport] {exc}")

    host = transport.raw("host", "127.0.0.1")
    port = transport.integer("port", 9009)
    if not 0 <= port <= 65535:
        raise ValidationError(f"[transport] port: must be in [0, 65535], got {port}")
    if mode == "tcp" and len(fed.seeds) != 1:
        raise ValidationError(
            f"[experiment] seeds: tcp transport supports exactly one seed, "
            f"got {len(fed.seeds)}"
        )

    out_raw = os.environ.get("EDGEFED_OUT_DIR") or output.raw("dir", "out")
    out_dir = (base / out_raw).resolve() if not os.path.isabs(out_raw) else Path(out_raw)

    return ExperimentConfig(
        fed=fed,
        link=link,
        transport_mode=mode,
        host=host,
        port=port,
        out_dir=out_dir,
        subsample_train=subsample_train,
        **paths,
    )
