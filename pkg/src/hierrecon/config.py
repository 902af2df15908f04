"""Run configuration: an INI-style ``key = value`` file with section headers.

Example::

    [data]
    hierarchy = hierarchy.csv
    series = series.csv
    seasonal_period = 12
    ; optional: external_forecasts = base.csv
    ; optional: regressor.price = price.csv

    [base]
    kind = ar_ls
    order = 2
    intercept = true
    seasonal_dummies = true
    ; per-node override: node.AA = seasonal_naive
    ; or: node.AB = ar_ls_exog order=1 regressor=price

    [forecast]
    horizon = 12
    ; origin defaults to the last observation
    p_start = 60

    [methods]
    names = bu, td-td1, mint-structural, mint-shrinkage, ml-rf, ml-gbt
    mo_level = 1
    mo_scheme = avg_hist

    [ml]
    ntree = 100
    tune = false
    refit_every = 1

    [evaluate]
    N = 168
    ; K defaults to every available origin

    [run]
    seed = 1
    workers = 1
    output = out

Relative paths resolve against the config file's directory.
"""

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .base_forecast import BaseModelSpec
from .ensemble import HyperParams, SearchSpace
from .errors import ConfigError
from .methods import MethodOptions, canonical_method, is_ml
from .ml_reconcile import TuneConfig

__all__ = ["RunConfig", "load_config", "SCHEMA", "schema_hash"]

_HP_KEYS = tuple(f.name for f in fields(HyperParams))

SCHEMA = {
    "data": ("hierarchy", "series", "seasonal_period", "external_forecasts", "regressor.*"),
    "base": ("kind", "order", "intercept", "seasonal_dummies", "regressor", "node.*"),
    "forecast": ("horizon", "origin", "p_start"),
    "methods": ("names", "mo_level", "mo_scheme"),
    "ml": _HP_KEYS + ("tune", "budget", "folds", "scope", "refit_every"),
    "evaluate": ("N", "K"),
    "run": ("seed", "workers", "output"),
}


def schema_hash() -> str:
    blob = json.dumps({k: sorted(v) for k, v in SCHEMA.items()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class RunConfig:
    hierarchy: Path
    series: Path
    seasonal_period: int = 1
    external_forecasts: Path | None = None
    regressors: dict = field(default_factory=dict)
    default_spec: BaseModelSpec = BaseModelSpec()
    node_specs: dict = field(default_factory=dict)
    horizon: int = 1
    origin: int | None = None
    p_start: int | None = None
    methods: list = field(default_factory=lambda: ["bu"])
    options: MethodOptions = MethodOptions()
    N: int | None = None
    K: int | None = None
    seed: int | None = None
    workers: int = 1
    output: Path = Path("out")

    def specs(self, node_ids) -> dict:
        return {nid: self.node_specs.get(nid, self.default_spec) for nid in node_ids}

    def validate(self):
        for p in (self.hierarchy, self.series, self.external_forecasts, *self.regressors.values()):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"file not found: {p}")
        if self.horizon < 1:
            raise ConfigError("forecast horizon must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(is_ml(m) for m in self.methods) and self.seed is None:
            raise ConfigError("a seed is required when an ML method is listed (set [run] seed or --seed)")
        for nid, spec in self.node_specs.items():
            if spec.kind == "ar_ls_exog" and spec.regressor not in self.regressors:
                raise ConfigError(f"node {nid!r} uses unknown regressor {spec.regressor!r}")
        if self.default_spec.kind == "ar_ls_exog" and self.default_spec.regressor not in self.regressors:
            raise ConfigError(f"default base model uses unknown regressor {self.default_spec.regressor!r}")


def _bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _num(value: str, key: str, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _spec_from_tokens(text: str, key: str, default: BaseModelSpec | None = None) -> BaseModelSpec:
    tokens = text.split()
    if not tokens:
        raise ConfigError(f"{key}: empty model spec")
    kw = {"kind": tokens[0]}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ConfigError(f"{key}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        kw[k] = v
    return _spec_from_mapping(kw, key, default)


def _spec_from_mapping(kw: dict, where: str, default: BaseModelSpec | None = None) -> BaseModelSpec:
    base = default or BaseModelSpec()
    try:
        return BaseModelSpec(
            kind=kw.get("kind", base.kind),
            order=_int(kw["order"], f"{where}.order") if "order" in kw else base.order,
            intercept=_bool(kw["intercept"], f"{where}.intercept") if "intercept" in kw else base.intercept,
            seasonal_dummies=(_bool(kw["seasonal_dummies"], f"{where}.seasonal_dummies")
                              if "seasonal_dummies" in kw else base.seasonal_dummies),
            regressor=kw.get("regressor") or base.regressor,
        )
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _check_keys(section: str, keys):
    allowed = SCHEMA[section]
    for key in keys:
        if key in allowed or any(a.endswith(".*") and key.startswith(a[:-1]) for a in allowed):
            continue
        raise ConfigError(f"[{section}] unknown key {key!r}")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse ``path`` and apply CLI ``overrides`` (seed, workers, output, methods)."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        _check_keys(section, parser[section].keys())

    root = path.parent

    def get(section, key, default=None):
        if parser.has_section(section) and key in parser[section] and parser[section][key].strip() != "":
            return parser[section][key].strip()
        return default

    def rel(p):
        return None if p is None else (root / p)

    if get("data", "hierarchy") is None or get("data", "series") is None:
        raise ConfigError(f"{path}: [data] hierarchy and series are required")

    regressors = {}
    if parser.has_section("data"):
        for key, value in parser["data"].items():
            if key.startswith("regressor."):
                regressors[key[len("regressor."):]] = rel(value.strip())

    base_kw = {k: v.strip() for k, v in (parser["base"].items() if parser.has_section("base") else [])
               if not k.startswith("node.") and v.strip()}
    default_spec = _spec_from_mapping(base_kw, "[base]")
    node_specs = {}
    if parser.has_section("base"):
        for key, value in parser["base"].items():
            if key.startswith("node."):
                node_specs[key[5:]] = _spec_from_tokens(value, f"[base] {key}")

    hp_kw = {}
    for name in _HP_KEYS:
        v = get("ml", name)
        if v is not None:
            kind = type(getattr(HyperParams(), name))
            hp_kw[name] = _num(v, f"[ml] {name}", int if kind is int else float)
    tune = None
    if _bool(get("ml", "tune", "false"), "[ml] tune"):
        tune = TuneConfig(
            budget=_int(get("ml", "budget", "20"), "[ml] budget"),
            folds=_int(get("ml", "folds", "10"), "[ml] folds"),
            scope=get("ml", "scope", "hierarchy"),
            space=SearchSpace(),
        )
    options = MethodOptions(
        mo_level=_int(get("methods", "mo_level", "1"), "[methods] mo_level"),
        mo_scheme=get("methods", "mo_scheme", "avg_hist"),
        hp=HyperParams(**hp_kw),
        tune=tune,
        refit_every=_int(get("ml", "refit_every", "1"), "[ml] refit_every"),
    )
    if options.refit_every < 1:
        raise ConfigError("[ml] refit_every must be >= 1")

    names = get("methods", "names", "bu")
    methods = [canonical_method(x) for x in names.split(",") if x.strip()]

    seed = get("run", "seed")
    cfg = RunConfig(
        hierarchy=rel(get("data", "hierarchy")),
        series=rel(get("data", "series")),
        seasonal_period=_int(get("data", "seasonal_period", "1"), "[data] seasonal_period"),
        external_forecasts=rel(get("data", "external_forecasts")),
        regressors=regressors,
        default_spec=default_spec,
        node_specs=node_specs,
        horizon=_int(get("forecast", "horizon", "1"), "[forecast] horizon"),
        origin=None if get("forecast", "origin") is None else _int(get("forecast", "origin"), "[forecast] origin"),
        p_start=None if get("forecast", "p_start") is None else _int(get("forecast", "p_start"), "[forecast] p_start"),
        methods=methods,
        options=options,
        N=None if get("evaluate", "N") is None else _int(get("evaluate", "N"), "[evaluate] N"),
        K=None if get("evaluate", "K") is None else _int(get("evaluate", "K"), "[evaluate] K"),
        seed=None if seed is None else _int(seed, "[run] seed"),
        workers=_int(get("run", "workers", "1"), "[run] workers"),
        output=rel(get("run", "output", "out")),
    )

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "methods":
            if value:
                cfg.methods = [canonical_method(x) for x in value]
        elif key == "output":
            cfg.output = Path(value)
        else:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg
