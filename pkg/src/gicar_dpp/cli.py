"""Command-line runner: ``gicar-dpp <command> [options]``.

Settings come from defaults, then a JSON ``--config`` file, then ``--set
key=value`` and the dedicated flags, later sources winning.  Every output
file carries the schema version and the fully resolved configuration.

Exit codes: 0 pass, 1 verification failure, 2 bad configuration,
3 numerical or truncation failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .car_fock import (
    DoubledGNS,
    FockSpace,
    QuasiFreeState,
    cp_map,
    cyclic_subspace,
    expectation,
    gicar_spanning_words,
    hamiltonian,
    normal_word,
    predicted_spectrum,
    quasi_free_moment,
    wick_product,
)
from .dynamics import (
    configuration_space,
    eigen_check,
    f_function,
    km_monte_carlo,
    transition_matrix,
)
from .ensembles import (
    auto_window,
    cd_kernel,
    correlation,
    family_from_config,
    orthonormal_system,
    sample_many,
    _parse_number,
)
from .errors import GicarError, NumericalError, ValidationError
from .lattice_partitions import LatticeKind, Partition, Window, partitions_up_to
from .operators import build_hypergeometric_D
from .zmeasure import (
    ZParams,
    kernel_diagonal_by_enumeration,
    m_value,
    mass_table,
    q_apply,
    q_row,
    sample_partitions,
    simulate_jump_chain,
    tail_mass,
    zmeasure_kernel,
)

SCHEMA_VERSION = 1

DEFAULTS = {
    "kernel": {"family": "charlier", "params": {"mu": 1.0}, "N": 2, "window": None, "order": 2},
    "evolve": {
        "family": "charlier",
        "params": {"mu": 1.0},
        "N": 2,
        "window": {"size": 40},
        "t": 0.5,
        "max_size": 3,
        "start": None,
    },
    "verify-car": {"modes": 4, "samples": 50, "tolerance": 1e-11},
    "zmeasure": {
        "z": 2,
        "zp": 3,
        "xi": 0.1,
        "cutoff": 20,
        "window": [-40.5, 40.5],
        "t": 0.5,
        "start": [],
        "trials": 0,
        "eigen_max": 3,
    },
    "sample": {"family": "charlier", "params": {"mu": 1.0}, "N": 2, "window": None, "count": 10},
}


class VerificationFailure(GicarError):
    pass


# ---- configuration ----------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[args.command]))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg.update(loaded)
    for item in args.set or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        cfg[key.strip()] = _parse_value(val)
    cfg["seed"] = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    if args.mc is not None:
        if args.mc < 0:
            raise ValidationError("--mc must be nonnegative")
        cfg["trials"] = int(args.mc)
    return cfg


def _workers() -> int:
    raw = os.environ.get("DPP_THREADS", "")
    cpus = os.cpu_count() or 1
    if not raw:
        return cpus
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"DPP_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(n, cpus))


def _window(family, spec, N: int) -> Window:
    if spec is None:
        return auto_window(family, N)
    if isinstance(spec, dict):
        if "size" in spec:
            if family.kind != LatticeKind.HALF:
                raise ValidationError("'size' windows are for half-line families; give lo and hi")
            return Window.half_line(int(spec["size"]), family.offset)
        if "lo" in spec and "hi" in spec:
            return Window(int(spec["lo"]), int(spec["hi"]), family.offset, family.kind)
    raise ValidationError(f"bad window specification {spec!r}")


def _family(cfg):
    if not isinstance(cfg.get("params"), dict):
        raise ValidationError("params must be an object")
    return family_from_config(cfg["family"], cfg["params"])


def _int(cfg, key, lo=None) -> int:
    v = cfg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ValidationError(f"{key} must be an integer")
    if lo is not None and v < lo:
        raise ValidationError(f"{key} must be at least {lo}")
    return int(v)


def _float(cfg, key) -> float:
    v = cfg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{key} must be a finite number")
    return float(v)


def _zparams(cfg) -> ZParams:
    def num(v):
        v = _parse_number(v)
        return v if not isinstance(v, float) or v != int(v) else int(v)

    return ZParams(num(cfg["z"]), num(cfg["zp"]), _float(cfg, "xi"))


# ---- output -----------------------------------------------------------------

class Output:
    def __init__(self, out: str | None, fmt: str, command: str, cfg: dict):
        self.dir = Path(out) if out else None
        self.fmt = fmt
        self.header = {"schema_version": SCHEMA_VERSION, "command": command, "version": __version__, "config": cfg}
        self.files: list[str] = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, columns: list[str], rows: list[list]) -> None:
        if self.dir is None:
            return
        if self.fmt == "json":
            body = dict(self.header, columns=columns, rows=[[_jsonable(v) for v in r] for r in rows])
            text = json.dumps(body, sort_keys=True, indent=1) + "\n"
            path = self.dir / f"{name}.json"
        else:
            lines = [
                f"# schema_version={SCHEMA_VERSION}",
                "# config=" + json.dumps(self.header["config"], sort_keys=True),
                ",".join(columns),
            ]
            lines += [",".join(_csv_cell(v) for v in r) for r in rows]
            text = "\n".join(lines) + "\n"
            path = self.dir / f"{name}.csv"
        path.write_text(text)
        self.files.append(path.name)

    def report(self, name: str, body: dict) -> None:
        if self.dir is None:
            return
        path = self.dir / f"{name}.json"
        path.write_text(json.dumps(dict(self.header, **_jsonable(body)), sort_keys=True, indent=1) + "\n")
        self.files.append(path.name)


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (list, tuple)):
        return " ".join(_csv_cell(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# ---- commands ----------------------------------------------------------------

def cmd_kernel(cfg: dict, out: Output) -> dict:
    order = _int(cfg, "order", 1)
    if str(cfg.get("family", "")).lower() == "zmeasure":
        p = _zparams(cfg)
        lo, hi = cfg.get("window") or [-40.5, 40.5]
        kernel = zmeasure_kernel(p, Window.half_integer(float(lo), float(hi)))
    else:
        fam = _family(cfg)
        N = _int(cfg, "N", 1)
        window = _window(fam, cfg.get("window"), N)
        kernel = cd_kernel(orthonormal_system(fam, window), N)
    pts = kernel.window.points
    out.table(
        "kernel",
        ["x", "y", "K"],
        [[float(x), float(y), float(kernel.matrix[i, j])] for i, x in enumerate(pts) for j, y in enumerate(pts)],
    )
    rows = []
    diag = kernel.diagonal()
    for n in range(1, order + 1):
        if n == 1:
            rows += [[1, [float(x)], float(d)] for x, d in zip(pts, diag)]
            continue
        support = [x for x, d in zip(pts, diag) if d > 1e-14]
        for combo in itertools.combinations(support, n):
            rows.append([n, [float(x) for x in combo], correlation(kernel, combo)])
    out.table("correlations", ["order", "points", "rho"], rows)
    summary = {
        "rank": kernel.rank,
        "trace": float(np.trace(kernel.matrix)),
        "projector_residual": kernel.projector_residual(),
        "window": kernel.window.to_json(),
    }
    out.report("summary", summary)
    return summary


def cmd_evolve(cfg: dict, out: Output) -> dict:
    fam = _family(cfg)
    N = _int(cfg, "N", 1)
    t = _float(cfg, "t")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    window = _window(fam, cfg.get("window"), N)
    op = build_hypergeometric_D(fam, window)
    space = configuration_space(fam, window, N)
    p = transition_matrix(op, N, t, space)
    labels = space.labels()
    core = np.nonzero(space.core)[0]
    out.table(
        "transition",
        ["source", "target", "P"],
        [[labels[a], labels[b], float(p.entries[a, b])] for a in core for b in range(space.size)],
    )
    sums = p.entries[core].sum(axis=1)
    out.table("row_sums", ["source", "sum"], [[labels[a], float(s)] for a, s in zip(core, sums)])
    off = p.entries[np.ix_(core, range(space.size))].copy()
    off[np.arange(len(core)), core] = 0.0
    sys_ = orthonormal_system(fam, window)
    eig_rows = []
    for lam in partitions_up_to(_int(cfg, "max_size", 0)):
        if len(lam) > N:
            continue
        f = f_function(sys_, lam, space)
        eig_rows.append([list(lam), eigen_check(p, f, fam)])
    out.table("eigen_residuals", ["lambda", "residual"], eig_rows)
    summary = {
        "t": t,
        "configurations": space.size,
        "core_rows": int(len(core)),
        "min_entry": p.min_entry(),
        "row_sum_deviation": p.row_sum_deviation(),
        "max_offdiag": float(np.abs(off).max()) if off.size else 0.0,
        "invariance_residual": p.invariance_residual(),
        "max_eigen_residual": max((r for _, r in eig_rows), default=0.0),
    }
    trials = int(cfg.get("trials", 0) or 0)
    if trials:
        start = cfg.get("start") or labels[int(np.argmax(space.mass))]
        mc = km_monte_carlo(op, start, t, trials, cfg["seed"], workers=_workers())
        src = space.index_of(start)
        entries = []
        for y, est, cnt, fac in zip(mc.targets, mc.estimate, mc.counts, mc.factor):
            try:
                exact = float(p.entries[src, space.index_of(y)])
            except GicarError:
                exact = 0.0
            q = exact / fac
            se = fac * math.sqrt(max(q * (1 - q), 0.0) / trials)
            entries.append(
                {
                    "entry": list(y),
                    "estimate": float(est),
                    "exact": exact,
                    "stderr": se,
                    "z": (float(est) - exact) / se if se > 0 else 0.0,
                    "count": int(cnt),
                    "compared": bool(q * trials >= 10),
                }
            )
        compared = [e for e in entries if e["compared"]]
        body = {"start": list(mc.start), "trials": trials, "survivors": mc.survivors, "entries": entries}
        body["max_abs_z"] = max((abs(e["z"]) for e in compared), default=0.0)
        body["compared"] = len(compared)
        out.report("monte_carlo", body)
        summary["mc_max_abs_z"] = body["max_abs_z"]
        summary["mc_compared"] = len(compared)
    out.report("summary", summary)
    return summary


def _random_vec(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def _random_unitary(rng, n):
    q, r = np.linalg.qr(_random_vec(rng, n * n).reshape(n, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def cmd_verify_car(cfg: dict, out: Output) -> dict:
    n = _int(cfg, "modes", 1)
    samples = _int(cfg, "samples", 1)
    tol = _float(cfg, "tolerance")
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 17]))
    u = _random_unitary(rng, n)
    k_diag = rng.uniform(0, 1, n)
    state = QuasiFreeState(u @ np.diag(k_diag) @ u.conj().T)
    gns = DoubledGNS(state)  # enforces the doubled-space ceiling first
    fock = FockSpace(n)
    res = {}

    car = 0.0
    for _ in range(samples):
        h, k = _random_vec(rng, n), _random_vec(rng, n)
        anti = fock.creation(h) @ fock.annihilation(k) + fock.annihilation(k) @ fock.creation(h)
        anti = anti.toarray() - np.vdot(k, h) * np.eye(fock.dim)
        car = max(car, float(np.abs(anti).max()))
    res["car"] = car

    qf = 0.0
    for _ in range(samples):
        m, l = rng.integers(0, 4, size=2)
        hs = [_random_vec(rng, n) for _ in range(m)]
        ks = [_random_vec(rng, n) for _ in range(l)]
        w = normal_word(hs[::-1], ks)
        qf = max(qf, abs(gns.vacuum_expectation(w) - quasi_free_moment(state, hs, ks)))
    res["quasi_free_determinant"] = qf

    wick = 0.0
    for _ in range(samples):
        p = int(rng.integers(1, 3))
        w = normal_word([_random_vec(rng, n) for _ in range(p)], [_random_vec(rng, n) for _ in range(p)])
        wick = max(wick, abs(expectation(state, wick_product(state, w))))
    res["wick_centered"] = wick

    t_op = u @ np.diag(rng.uniform(0, 1, n) * np.exp(1j * rng.uniform(0, 2 * np.pi, n))) @ u.conj().T
    inv = 0.0
    for _ in range(samples):
        p = int(rng.integers(0, 3))
        w = normal_word([_random_vec(rng, n) for _ in range(p)], [_random_vec(rng, n) for _ in range(p)])
        inv = max(inv, abs(expectation(state, cp_map(state, t_op, w)) - expectation(state, [(1, w)])))
    res["cp_map_invariance"] = inv

    occ = list(range(n // 2))
    proj_state = QuasiFreeState(u[:, occ] @ u[:, occ].conj().T)
    pg = DoubledGNS(proj_state)
    m = -np.arange(n, dtype=float)
    h_op = hamiltonian(pg, u, occ, m).toarray()
    basis = cyclic_subspace(pg, gicar_spanning_words(n))
    got = np.sort(np.linalg.eigvalsh(basis.conj().T @ h_op @ basis))
    want = np.array(predicted_spectrum(m, occ))
    res["hamiltonian_spectrum"] = float(np.abs(got - want).max()) if len(got) == len(want) else math.inf

    tolerances = {key: tol for key in res}
    tolerances["car"] = 1e-13
    tolerances["hamiltonian_spectrum"] = 1e-9
    failures = sorted(k for k, v in res.items() if not v <= tolerances[k])
    body = {"modes": n, "residuals": res, "tolerances": tolerances, "failed": failures, "passed": not failures}
    out.report("verify_car", body)
    if failures:
        raise VerificationFailure("identities above tolerance: " + ", ".join(failures))
    return body


def cmd_zmeasure(cfg: dict, out: Output) -> dict:
    p = _zparams(cfg)
    cutoff = _int(cfg, "cutoff", 0)
    t = _float(cfg, "t")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    masses = mass_table(p, cutoff)
    out.table("mass", ["partition", "mass"], [[list(lam), m] for lam, m in masses.items()])
    partial = math.fsum(masses.values())
    tail = tail_mass(p, cutoff)

    lo, hi = cfg.get("window") or [-40.5, 40.5]
    window = Window.half_integer(float(lo), float(hi))
    kdiag = zmeasure_kernel(p, window).diagonal()
    enum = kernel_diagonal_by_enumeration(p, window, cutoff)
    out.table(
        "kernel_diagonal",
        ["x", "kernel", "enumeration", "difference"],
        [[float(x), float(a), float(b), float(a - b)] for x, a, b in zip(window.points, kdiag, enum)],
    )

    emax = _int(cfg, "eigen_max", 0)
    row_dev = max(abs(float(sum(q_row(p, lam).values()))) for lam in partitions_up_to(emax + 1))
    eig = 0.0
    for mu in partitions_up_to(emax):
        for lam in partitions_up_to(emax + 1):
            lhs = q_apply(p, lambda nu: m_value(p, mu, nu), lam)
            eig = max(eig, abs(float(lhs + mu.size * m_value(p, mu, lam))))
    summary = {
        "partial_mass": partial,
        "tail_bound": tail,
        "kernel_max_difference": float(np.abs(kdiag - enum).max()),
        "q_row_sum_deviation": row_dev,
        "q_eigen_residual": eig,
    }
    trials = int(cfg.get("trials", 0) or 0)
    if trials:
        start = Partition(cfg.get("start") or [])
        stats = simulate_jump_chain(p, start, t, trials, cfg["seed"])
        emp = stats.empirical()
        rows = sorted(emp.items(), key=lambda kv: (kv[0].size, [-x for x in kv[0]]))
        out.table("jump_law", ["partition", "frequency"], [[list(lam), f] for lam, f in rows])
        mean, se = stats.mean(lambda lam: m_value(p, (1,), lam))
        want = math.exp(-t) * float(m_value(p, (1,), start))
        summary["jump"] = {
            "trials": trials,
            "observable_mean": mean,
            "observable_expected": want,
            "observable_z": (mean - want) / se if se > 0 else 0.0,
            "point_mass": len(emp) == 1,
        }
    out.report("summary", summary)
    return summary


def cmd_sample(cfg: dict, out: Output) -> dict:
    count = _int(cfg, "count", 1)
    if str(cfg.get("family", "")).lower() == "zmeasure":
        p = _zparams(cfg)
        draws = sample_partitions(p, _int(cfg, "cutoff", 0), count, cfg["seed"])
        out.table("samples", ["draw", "partition"], [[i, list(lam)] for i, lam in enumerate(draws)])
        return {"count": count}
    fam = _family(cfg)
    N = _int(cfg, "N", 1)
    window = _window(fam, cfg.get("window"), N)
    kernel = cd_kernel(orthonormal_system(fam, window), N)
    rows = sample_many(kernel, count, cfg["seed"])
    pts = window.points
    out.table("samples", ["draw", "points"], [[i, [float(pts[j]) for j in sorted(r)]] for i, r in enumerate(rows)])
    return {"count": count, "window": window.to_json()}


COMMANDS = {
    "kernel": cmd_kernel,
    "evolve": cmd_evolve,
    "verify-car": cmd_verify_car,
    "zmeasure": cmd_zmeasure,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gicar-dpp", description="Determinantal ensembles and their dynamics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting (JSON value)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="directory for output files")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")
        sp.add_argument("--mc", type=int, metavar="TRIALS", help="Monte Carlo trials")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Output(args.out, args.format, args.command, cfg)
        summary = COMMANDS[args.command](cfg, out)
        code = 0
        status = "pass"
    except VerificationFailure as exc:
        summary, code, status = {"error": str(exc)}, 1, "fail"
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"schema_version": SCHEMA_VERSION, "status": status, **_jsonable(summary)}, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
