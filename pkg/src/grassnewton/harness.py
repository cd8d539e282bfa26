"""Experiment configuration, runs, convergence logs and solver comparison.

A configuration is a flat JSON object, for example::

    {"model": "quadratic", "n_g": 12, "n": 3, "solver": "newton-bt"}

Model keys, solver keys and every :class:`SolverConfig` field live at the
top level; unknown keys are rejected.
"""

import csv
import hashlib
import io
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .energy import DIRAC_CX, HESSIAN_MODES, Atom, KohnSham1D, QuadraticTraceModel
from .errors import ConfigError
from .kernels import qr_positive
from .retractions import RetractionKind
from .solvers import CONVERGED, SOLVERS, IterationRecord, SolverConfig

MODELS = ("quadratic", "ks1d")
DEFAULT_ATOMS = ((0.35, 200.0, 0.08), (0.65, 150.0, 0.08))

COLUMNS = ("n", "energy", "grad_norm", "step", "backtracks", "inner_iters", "elapsed_s")
_SOLVER_FIELDS = tuple(n for n in SolverConfig.field_names())
_RUN_KEYS = {"solver", "output"} | set(_SOLVER_FIELDS)
_MODEL_KEYS = {
    "quadratic": {"matrix", "matrix_seed"},
    "ks1d": {"box_length", "atoms", "c_x", "rho_floor"},
}
_KNOWN = {"model", "n_g", "n", "seed"} | _RUN_KEYS | set().union(*_MODEL_KEYS.values())


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    n_g: int
    n: int
    solver: str
    seed: int = 0
    model_params: dict = field(default_factory=dict)
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    output: str = None

    def to_dict(self):
        d = {"model": self.model, "n_g": self.n_g, "n": self.n, "solver": self.solver, "seed": self.seed}
        d.update(self.model_params)
        sc = asdict(self.solver_config)
        sc["retraction"] = str(self.solver_config.retraction)
        d.update(sc)
        if self.output is not None:
            d["output"] = self.output
        return d

    def digest(self):
        payload = {k: v for k, v in self.to_dict().items() if k != "output"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def model_key(self):
        """Everything that defines the problem instance (model + initial guess)."""
        return (self.model, self.n_g, self.n, self.seed, json.dumps(self.model_params, sort_keys=True))

    def with_overrides(self, seed=None, retraction=None, hessian=None, output=None):
        d = self.to_dict()
        if seed is not None:
            d["seed"] = seed
        if retraction is not None:
            d["retraction"] = retraction
        if hessian is not None:
            d["hessian_mode"] = hessian
        if output is not None:
            d["output"] = output
        return config_from_dict(d)


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _int(d, key, text, minimum=None):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", field=key, line=_line_of(text, key))
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}, got {v}", field=key, line=_line_of(text, key))
    return v


def _float(d, key, text):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", field=key, line=_line_of(text, key))
    return float(v)


def _parse_atoms(raw, text):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a non-empty list of atoms", field="atoms", line=_line_of(text, "atoms"))
    atoms = []
    for i, a in enumerate(raw):
        if isinstance(a, dict):
            extra = set(a) - {"position", "depth", "width"}
            if extra or len(a) != 3:
                raise ConfigError(f"atom {i} needs exactly position, depth, width", field="atoms",
                                  line=_line_of(text, "atoms"))
            vals = (a["position"], a["depth"], a["width"])
        elif isinstance(a, list) and len(a) == 3:
            vals = tuple(a)
        else:
            raise ConfigError(f"atom {i} must be an object or a [position, depth, width] list",
                              field="atoms", line=_line_of(text, "atoms"))
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vals):
            raise ConfigError(f"atom {i} has non-numeric entries", field="atoms", line=_line_of(text, "atoms"))
        if not vals[2] > 0:
            raise ConfigError(f"atom {i} width must be positive", field="atoms", line=_line_of(text, "atoms"))
        atoms.append([float(x) for x in vals])
    return atoms


def config_from_dict(d, text=None):
    """Validate a decoded configuration mapping and fill defaults."""
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object", line=1)
    for key in d:
        if key not in _KNOWN:
            raise ConfigError(f"unknown key '{key}'", field=key, line=_line_of(text, key))
    for key in ("model", "n_g", "n", "solver"):
        if key not in d:
            raise ConfigError("missing required key", field=key)
    model = d["model"]
    if model not in MODELS:
        raise ConfigError(f"must be one of {MODELS}, got {model!r}", field="model", line=_line_of(text, "model"))
    for key in set().union(*_MODEL_KEYS.values()) - _MODEL_KEYS[model]:
        if key in d:
            raise ConfigError(f"not a parameter of model '{model}'", field=key, line=_line_of(text, key))
    n_g = _int(d, "n_g", text, minimum=2)
    n = _int(d, "n", text, minimum=1)
    if n > n_g:
        raise ConfigError(f"n ({n}) must not exceed n_g ({n_g})", field="n", line=_line_of(text, "n"))
    solver = d["solver"]
    if solver not in SOLVERS:
        raise ConfigError(f"must be one of {tuple(SOLVERS)}, got {solver!r}", field="solver",
                          line=_line_of(text, "solver"))
    seed = _int(d, "seed", text, minimum=0) if "seed" in d else 0

    if model == "quadratic":
        params = {"matrix": d.get("matrix", "diag"), "matrix_seed": 0}
        if params["matrix"] not in ("diag", "random"):
            raise ConfigError("must be 'diag' or 'random'", field="matrix", line=_line_of(text, "matrix"))
        if "matrix_seed" in d:
            params["matrix_seed"] = _int(d, "matrix_seed", text, minimum=0)
    else:
        params = {
            "box_length": _float(d, "box_length", text) if "box_length" in d else 1.0,
            "atoms": _parse_atoms(d["atoms"], text) if "atoms" in d else [list(a) for a in DEFAULT_ATOMS],
            "c_x": _float(d, "c_x", text) if "c_x" in d else DIRAC_CX,
            "rho_floor": _float(d, "rho_floor", text) if "rho_floor" in d else 1e-12,
        }
        if not params["box_length"] > 0:
            raise ConfigError("must be positive", field="box_length", line=_line_of(text, "box_length"))
        if params["c_x"] < 0:
            raise ConfigError("must be >= 0", field="c_x", line=_line_of(text, "c_x"))
        if not params["rho_floor"] > 0:
            raise ConfigError("must be positive", field="rho_floor", line=_line_of(text, "rho_floor"))

    kwargs = {}
    for key in _SOLVER_FIELDS:
        if key not in d:
            continue
        v = d[key]
        if key in ("sigma_mode", "hessian_mode", "retraction"):
            if not isinstance(v, str):
                raise ConfigError(f"expected a string, got {v!r}", field=key, line=_line_of(text, key))
            kwargs[key] = v
        elif key in ("inner_cap", "max_outer", "max_backtracks", "stall_window"):
            kwargs[key] = _int(d, key, text)
        else:
            kwargs[key] = _float(d, key, text)
    if kwargs.get("hessian_mode", HESSIAN_MODES[0]) not in HESSIAN_MODES:
        raise ConfigError(f"must be one of {HESSIAN_MODES}", field="hessian_mode",
                          line=_line_of(text, "hessian_mode"))
    try:
        sc = SolverConfig(**kwargs)
        if solver == "newton-bt":
            sc.for_backtracking()
    except ConfigError as exc:
        raise ConfigError(str(exc).split("] ", 1)[-1], field=exc.field, line=_line_of(text, exc.field or "")) from None

    output = d.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("expected a path string", field="output", line=_line_of(text, "output"))
    return ExperimentConfig(model, n_g, n, solver, seed, params, sc, output)


def parse_config(text):
    """Parse JSON configuration text into an :class:`ExperimentConfig`."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return config_from_dict(d, text)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# runs


def build_model(cfg):
    if cfg.model == "quadratic":
        p = cfg.model_params
        if p["matrix"] == "diag":
            A = np.diag(np.arange(1.0, cfg.n_g + 1))
        else:
            G = np.random.default_rng(p["matrix_seed"]).standard_normal((cfg.n_g, cfg.n_g))
            A = 0.5 * (G + G.T)
        return QuadraticTraceModel(A, cfg.n)
    p = cfg.model_params
    return KohnSham1D(cfg.n_g, cfg.n, p["box_length"], tuple(Atom(*a) for a in p["atoms"]),
                      p["c_x"], p["rho_floor"])


def initial_guess(n_g, n, seed):
    """Seeded Gaussian matrix orthonormalized by positive-diagonal QR."""
    G = np.random.default_rng(seed).standard_normal((n_g, n))
    return qr_positive(G)[0]


@dataclass
class ConvergenceLog:
    header: dict
    rows: list
    status: str

    @property
    def final(self):
        return self.rows[-1]

    def to_csv(self):
        buf = io.StringIO()
        for k, v in self.header.items():
            buf.write(f"# {k}={v}\n")
        buf.write(f"# status={self.status}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.n, f"{r.energy:.16e}", f"{r.grad_norm:.16e}", f"{r.step:.16e}",
                        r.backtracks, r.inner_iters, f"{r.elapsed_s:.16e}"])
        return buf.getvalue()

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, text):
        header = {}
        status = None
        body = []
        for line in text.splitlines():
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                if k == "status":
                    status = v
                else:
                    header[k] = v
            elif line:
                body.append(line)
        reader = csv.reader(body)
        cols = next(reader)
        if tuple(cols) != COLUMNS:
            raise ValueError(f"unexpected columns {cols}")
        rows = [IterationRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]),
                                float(r[6])) for r in reader]
        return cls(header, rows, status)

    @classmethod
    def read(cls, path):
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(cfg, out_dir=None):
    """Build the model, run the configured solver and return its log.

    The log is written to ``cfg.output`` (relative paths resolved against
    ``out_dir``) or, when only ``out_dir`` is given, to
    ``<out_dir>/<solver>-<digest>.csv``. Returns ``(log, result)``.
    """
    model = build_model(cfg)
    U0 = initial_guess(cfg.n_g, cfg.n, cfg.seed)
    header = {
        "config_digest": cfg.digest(),
        "config": json.dumps(cfg.to_dict(), sort_keys=True),
        "initial_guess": f"gaussian+qr_positive seed={cfg.seed}",
        "started": _now(),
    }
    result = SOLVERS[cfg.solver](model, U0, cfg.solver_config)
    header["finished"] = _now()
    log = ConvergenceLog(header, list(result.records), result.status)
    target = None
    if cfg.output is not None:
        target = Path(cfg.output)
        if out_dir is not None and not target.is_absolute():
            target = Path(out_dir) / target
    elif out_dir is not None:
        target = Path(out_dir) / f"{cfg.solver}-{cfg.digest()}.csv"
    if target is not None:
        log.write(target)
    return log, result


@dataclass
class SummaryRow:
    solver: str
    energy: float
    iterations: int
    grad_norm: float
    elapsed_s: float
    status: str


def compare(configs, out_dir=None, workers=1):
    """Run configurations that differ only in solver settings and summarize them."""
    configs = list(configs)
    if len(configs) < 2:
        raise ConfigError("compare needs at least two configurations")
    keys = {c.model_key() for c in configs}
    if len(keys) != 1:
        raise ConfigError("configurations must share model, sizes, model parameters and seed")
    names = [c.solver for c in configs]
    labels = [n if names.count(n) == 1 else f"{n}-{i}" for i, n in enumerate(names)]

    def one(args):
        label, cfg = args
        target = None
        if out_dir is not None:
            target = str(Path(out_dir) / f"{label}.csv")
        return run_experiment(cfg.with_overrides(output=target) if target else cfg)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        runs = list(pool.map(one, zip(labels, configs)))
    summary = []
    for label, (log, _) in zip(labels, runs):
        f = log.final
        summary.append(SummaryRow(label, f.energy, f.n, f.grad_norm, f.elapsed_s, log.status))
    if out_dir is not None:
        write_summary(summary, Path(out_dir) / "summary.csv")
    return summary


def write_summary(summary, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("solver", "energy", "iterations", "grad_norm", "elapsed_s", "status"))
        for s in summary:
            w.writerow((s.solver, f"{s.energy:.16e}", s.iterations, f"{s.grad_norm:.16e}",
                        f"{s.elapsed_s:.16e}", s.status))


def format_summary(summary):
    lines = [f"{'solver':<18}{'energy':>26}{'iter':>8}{'|grad_G E|_F':>14}{'time (s)':>11}  status"]
    for s in summary:
        lines.append(f"{s.solver:<18}{s.energy:>26.16e}{s.iterations:>8d}{s.grad_norm:>14.3e}"
                     f"{s.elapsed_s:>11.3f}  {s.status}")
    return "\n".join(lines)


def converged(log):
    return log.status == CONVERGED
