"""Scenario definition and the flat ``key=value`` config format.

Every key is namespaced (``attack.kind=A5``); ``#`` starts a comment.
Unknown keys and malformed values raise :class:`ConfigError` naming the
offending field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class DataSpec:
    source: str = "synthetic"  # synthetic | idx
    classes: int = 10
    dim: int = 32
    per_client: int = 60
    spread: float = 0.2
    deg_niid: float = 0.1
    eval_fraction: float = 0.2
    images: str = ""
    labels: str = ""


@dataclass
class ModelSpec:
    kind: str = "mlp"
    hidden: int = 32


@dataclass
class FlSpec:
    num_clients: int = 100
    rounds: int = 50
    q: float = 0.4
    warmup_rounds: int = 0
    defense: bool = True
    clip: bool = True
    backend: str = "ideal"


@dataclass
class AttackParams:
    kind: str = "none"
    pmr: float = 0.0
    pdr: float = 0.5
    identities: str = "fixed"  # fixed | per-round
    target: int = 0
    trigger_size: int = 5
    krum_eps: float = 1e-3
    krum_thresh: float = 2e-2
    edge_source: int = 7
    edge_target: int = 1
    edge_shift: float = 0.15
    edge_spread: float = 0.1
    edge_count: int = 400
    pool_size: int = 100


@dataclass
class DpSpec:
    sigma: float = 0.0
    delta: float = 1e-3


@dataclass
class ClipSpec:
    c0: float = 10.0
    gamma: float = 0.5
    eta: float = 0.3


@dataclass
class ClientSpec:
    eta_local: float = 0.3
    eta_global: float = 0.3
    epochs: int = 1
    batch_size: int = 64
    lambda_init: float = 0.0
    eta_ditto: float = 1.0
    acc_thres: float = 0.05


@dataclass
class Scenario:
    seed: int = 0
    data: DataSpec = field(default_factory=DataSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    fl: FlSpec = field(default_factory=FlSpec)
    attack: AttackParams = field(default_factory=AttackParams)
    dp: DpSpec = field(default_factory=DpSpec)
    clip: ClipSpec = field(default_factory=ClipSpec)
    client: ClientSpec = field(default_factory=ClientSpec)

    def copy(self) -> "Scenario":
        return dataclasses.replace(
            self, **{f.name: dataclasses.replace(getattr(self, f.name)) for f in dataclasses.fields(self) if f.name != "seed"}
        )


_SECTIONS = {f.name for f in dataclasses.fields(Scenario) if f.name != "seed"}


def _parse_value(raw: str, typ: type):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        if "/" in raw:  # allow fractions such as 19/40
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    return raw


def _field_types(obj) -> dict[str, type]:
    # annotations are strings under postponed evaluation
    names = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: names[str(f.type)] for f in dataclasses.fields(obj)}


def set_key(s: Scenario, key: str, raw: str) -> None:
    """Assign one ``section.field`` (or ``seed``) from its string form."""
    if key == "seed":
        try:
            s.seed = int(raw)
        except ValueError:
            raise ConfigError([f"seed: expected an integer, got {raw!r}"]) from None
        return
    section, _, name = key.partition(".")
    if section not in _SECTIONS or not name:
        raise ConfigError([f"{key}: unknown key"])
    obj = getattr(s, section)
    types = _field_types(obj)
    if name not in types:
        raise ConfigError([f"{key}: unknown key"])
    try:
        setattr(obj, name, _parse_value(raw.strip(), types[name]))
    except ValueError as exc:
        raise ConfigError([f"{key}: {exc}"]) from None


def parse_config(text: str, base: Scenario | None = None) -> Scenario:
    s = base.copy() if base is not None else Scenario()
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value")
            continue
        key, raw = (p.strip() for p in line.split("=", 1))
        try:
            set_key(s, key, raw)
        except ConfigError as exc:
            errors.extend(f"line {lineno}: {e}" for e in exc.errors)
    try:
        validate(s)
    except ConfigError as exc:
        errors.extend(exc.errors)
    if errors:
        raise ConfigError(errors)
    return s


def load_config(path) -> Scenario:
    return parse_config(Path(path).read_text())


def to_text(s: Scenario) -> str:
    lines = [f"seed={s.seed}"]
    for section in sorted(_SECTIONS):
        obj = getattr(s, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name}={getattr(obj, f.name)}")
    return "\n".join(lines) + "\n"


def validate(s: Scenario) -> Scenario:
    e = []

    def need(cond: bool, msg: str):
        if not cond:
            e.append(msg)

    d, fl, a = s.data, s.fl, s.attack
    need(d.source in ("synthetic", "idx"), "data.source: must be synthetic or idx")
    need(d.source != "idx" or (d.images and d.labels), "data.images/data.labels: required for idx data")
    need(d.classes >= 2, "data.classes: must be >= 2")
    need(d.dim >= 2, "data.dim: must be >= 2")
    need(d.per_client >= 2, "data.per_client: must be >= 2")
    need(d.spread >= 0, "data.spread: must be >= 0")
    need(1.0 / d.classes - 1e-12 <= d.deg_niid <= 1.0, "data.deg_niid: must lie in [1/L, 1]")
    need(0.0 < d.eval_fraction < 1.0, "data.eval_fraction: must lie in (0, 1)")
    need(s.model.kind in ("logreg", "mlp"), "model.kind: must be logreg or mlp")
    need(s.model.hidden >= 1, "model.hidden: must be >= 1")
    need(fl.num_clients >= 1, "fl.num_clients: must be >= 1")
    need(fl.rounds >= 0, "fl.rounds: must be >= 0")
    need(0.0 < fl.q <= 1.0, "fl.q: must lie in (0, 1]")
    need(0 <= fl.warmup_rounds <= fl.rounds, "fl.warmup_rounds: must lie in [0, fl.rounds]")
    need(fl.backend in ("ideal", "shared"), "fl.backend: must be ideal or shared")
    need(a.kind in ("none", "A1", "A2", "A3", "A4", "A5", "A6"), "attack.kind: must be none or A1..A6")
    need(0.0 <= a.pmr <= 1.0, "attack.pmr: must lie in [0, 1]")
    need(0.0 <= a.pdr <= 1.0, "attack.pdr: must lie in [0, 1]")
    need(a.identities in ("fixed", "per-round"), "attack.identities: must be fixed or per-round")
    need(0 <= a.target < d.classes, "attack.target: must be a valid class")
    need(0 <= a.edge_source < d.classes and 0 <= a.edge_target < d.classes, "attack.edge_source/edge_target: must be valid classes")
    need(a.trigger_size >= 1, "attack.trigger_size: must be >= 1")
    need(a.kind != "A5" or a.trigger_size**2 <= d.dim, "attack.trigger_size: trigger larger than the feature vector")
    need(a.krum_eps > 0 and a.krum_thresh > 0, "attack.krum_eps/krum_thresh: must be positive")
    need(a.pool_size >= 1 and a.edge_count >= 1, "attack.pool_size/edge_count: must be >= 1")
    need(s.dp.sigma >= 0, "dp.sigma: must be >= 0")
    need(fl.clip or s.dp.sigma == 0, "dp.sigma: must be 0 when fl.clip=false (unbounded sensitivity)")
    need(0.0 < s.dp.delta < 1.0, "dp.delta: must lie in (0, 1)")
    need(s.clip.c0 > 0, "clip.c0: must be positive")
    need(s.clip.eta >= 0, "clip.eta: must be >= 0")
    need(0.0 <= s.clip.gamma <= 1.0, "clip.gamma: must lie in [0, 1]")
    c = s.client
    need(c.eta_local > 0 and c.eta_global > 0, "client.eta_local/eta_global: must be positive")
    need(c.epochs >= 0, "client.epochs: must be >= 0")
    need(c.batch_size >= 1, "client.batch_size: must be >= 1")
    need(0.0 <= c.lambda_init <= 2.0, "client.lambda_init: must lie in [0, 2]")
    if e:
        raise ConfigError(e)
    return s
