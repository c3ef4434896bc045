"""Command-line front end.

Every run writes its result tables (CSV with headers) and a ``manifest.json``
holding the fully resolved configuration into the output directory (flag
``--out``, else ``$MPSEXC_OUT``, else ``./mpsexc-out``).  A manifest can be
replayed with ``--config manifest.json``.  Exit codes: 0 success, 2 invalid
input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import MpsexcError, ValidationError

OUT_ENV = "MPSEXC_OUT"
COMMANDS = ("spectrum", "dispersion", "verify", "bound-state", "localization", "glauber", "cp-check")

# (flag, type, default, help); type "list:float" parses comma/space lists
OPTIONS: dict[str, list[tuple[str, str, Any, str]]] = {
    "spectrum": [
        ("mps", "str", None, "MPS file or built-in name (pauli, aklt:0.667, ghz)"),
        ("channel", "str", None, "channel file (instead of --mps)"),
        ("canonical", "bool", True, "canonicalize the tensor first"),
    ],
    "dispersion": [
        ("mps", "str", None, "MPS file or built-in name"),
        ("L", "int", 3, "parent-Hamiltonian range"),
        ("points", "int", 64, "number of momenta on [0, 2pi)"),
        ("truncation", "int", None, "finite Fourier-transfer truncation (default: closed form)"),
    ],
    "verify": [
        ("mps", "str", None, "MPS file or built-in name"),
        ("N", "int", 6, "ring length"),
        ("L", "int", 2, "parent-Hamiltonian range"),
        ("levels", "int", 6, "number of lowest levels"),
        ("momenta", "list:int", [], "trial momenta m (k = 2 pi m / N) for one-particle modes"),
        ("seed", "int", 0, "eigensolver start vector seed"),
    ],
    "bound-state": [
        ("lam", "float", 0.9, "subleading modulus of the s+- modes"),
        ("phi", "float", 0.0, "phase of the s+ eigenvalue"),
        ("k", "float", None, "momentum (default: rest momentum of the mode)"),
        ("L", "list:int", [8, 16, 32, 64], "ranges"),
        ("gamma", "list:float", [0.3, 0.4, 0.7], "range renormalization exponents"),
    ],
    "localization": [
        ("family", "str", "aklt", "disorder family"),
        ("W", "list:float", [0.0, 1.0], "disorder variances"),
        ("tmin", "float", 1.0, "first t"),
        ("tmax", "float", 1.0e4, "last t"),
        ("points", "int", 60, "log-spaced t points"),
        ("N", "int", 100, "power-sum truncation"),
        ("seeds", "list:int", [0], "seeds (monte-carlo / quenched modes)"),
        ("mode", "str", "analytic", "analytic or monte-carlo averaging"),
        ("samples", "int", 10000, "monte-carlo samples"),
        ("quenched", "bool", False, "average Xi over realizations instead of the channel"),
        ("workers", "int", 1, "worker processes"),
    ],
    "glauber": [
        ("beta", "float", 0.5, "inverse temperature"),
        ("sites", "int", 32, "ring length"),
        ("horizon", "float", 4.0, "time horizon"),
        ("trajectories", "int", 100000, "ensemble size"),
        ("seed", "int", 0, "master seed"),
        ("snapshots", "int", 8, "snapshot times (evenly spaced up to the horizon)"),
        ("logged", "int", 10, "trajectories whose full event log is archived"),
    ],
    "cp-check": [
        ("channel", "str", None, "channel file for a direct Choi test"),
        ("D", "int", None, "dimension of a clock spectrum"),
        ("moduli", "list:float", None, "clock-spectrum moduli |lambda_g|"),
        ("kappas", "list:float", None, "clock-spectrum phase indices kappa_g"),
        ("random", "int", 0, "number of random clock spectra to cross-check"),
        ("seed", "int", 0, "seed for random spectra"),
    ],
}


def _parse_list(s: str, cast):
    s = s.replace(",", " ").split()
    return [cast(x) for x in s]


def _cast(kind: str, value):
    if value is None:
        return None
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if kind.startswith("list:"):
        cast = int if kind.endswith("int") else float
        if isinstance(value, str):
            return _parse_list(value, cast)
        return [cast(v) for v in value]
    return str(value)


@dataclass
class RunConfig:
    command: str
    params: dict[str, Any]
    out: str
    config_file: str | None = None
    explicit: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"command": self.command, "params": self.params, "out": self.out}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # unknown flags and bad values -> validation exit code
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpsexc", description="Excitations of injective MPS from their transfer channel.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", default=argparse.SUPPRESS, help="replay a manifest or JSON config")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for cmd, opts in OPTIONS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
        sp.add_argument("--config", default=argparse.SUPPRESS, help="JSON config or manifest file")
        for name, kind, default, hlp in opts:
            flag = "--" + name
            if kind == "bool":
                sp.add_argument(flag, dest=name, default=argparse.SUPPRESS, action=argparse.BooleanOptionalAction,
                                help=f"{hlp} (default {default})")
            else:
                sp.add_argument(flag, dest=name, default=argparse.SUPPRESS, help=f"{hlp} (default {default})")
    return p


def parse_config(argv: Sequence[str] | None = None, config_file: str | None = None) -> RunConfig:
    """Resolve flags, an optional JSON config/manifest and defaults.

    A value given both on the command line and in the config file must agree.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = vars(build_parser().parse_args(argv))
    cmd = ns.pop("command", None)
    cfg_path = ns.pop("config", None) or config_file
    file_params: dict[str, Any] = {}
    file_out = None
    if cfg_path is not None:
        try:
            doc = json.loads(Path(cfg_path).read_text())
        except FileNotFoundError as exc:
            raise ValidationError(f"config file {cfg_path!r} not found") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {cfg_path!r} is not valid JSON") from exc
        if "command" in doc:
            if cmd is not None and doc["command"] != cmd:
                raise ValidationError(f"config is for {doc['command']!r}, not {cmd!r}")
            cmd = doc["command"]
        file_params = dict(doc.get("params", {k: v for k, v in doc.items() if k not in ("command", "out")}))
        file_out = doc.get("out")
    if cmd is None:
        raise ValidationError("missing command; choose one of " + ", ".join(COMMANDS))
    if cmd not in OPTIONS:
        raise ValidationError(f"unknown command {cmd!r}")
    out_flag = ns.pop("out", None)
    kinds = {name: (kind, default) for name, kind, default, _ in OPTIONS[cmd]}
    unknown = set(file_params) - set(kinds)
    if unknown:
        raise ValidationError(f"unknown config keys for {cmd}: {sorted(unknown)}")
    params, explicit = {}, []
    for name, (kind, default) in kinds.items():
        flag_val = _cast(kind, ns[name]) if name in ns else None
        file_val = _cast(kind, file_params[name]) if name in file_params else None
        if name in ns and name in file_params and flag_val != file_val:
            raise ValidationError(f"--{name}={flag_val} conflicts with config value {file_val}")
        if name in ns:
            params[name] = flag_val
            explicit.append(name)
        elif name in file_params:
            params[name] = file_val
        else:
            params[name] = default
    out = out_flag or file_out or os.environ.get(OUT_ENV) or "mpsexc-out"
    _validate(cmd, params)
    return RunConfig(cmd, params, str(out), cfg_path, explicit)


def _require(cond: bool, msg: str):
    if not cond:
        raise ValidationError(msg)


def _validate(cmd: str, p: dict):
    if cmd in ("spectrum",):
        _require((p["mps"] is None) != (p["channel"] is None), "give exactly one of --mps and --channel")
    if cmd in ("dispersion", "verify"):
        _require(p["mps"] is not None, "--mps is required")
    if "L" in p and isinstance(p["L"], int):
        _require(p["L"] >= 1, "L must be >= 1")
    if cmd == "dispersion":
        _require(p["points"] >= 1, "points must be >= 1")
        _require(p["truncation"] is None or p["truncation"] >= 1, "truncation must be >= 1")
    if cmd == "verify":
        _require(p["N"] > p["L"], "need N > L")
        _require(p["levels"] >= 0, "levels must be >= 0")
    if cmd == "bound-state":
        _require(0 <= p["lam"] < 1, "lam must lie in [0, 1)")
        _require(len(p["L"]) > 0 and min(p["L"]) >= 2, "ranges must be >= 2")
    if cmd == "localization":
        _require(1 <= p["tmin"] <= p["tmax"], "need 1 <= tmin <= tmax")
        _require(p["points"] >= 1 and p["N"] >= 1, "points and N must be >= 1")
        _require(len(p["W"]) > 0 and min(p["W"]) >= 0, "W must be a nonempty list of variances >= 0")
        _require(len(p["seeds"]) > 0, "at least one seed")
        _require(p["mode"] in ("analytic", "monte-carlo"), "mode must be analytic or monte-carlo")
    if cmd == "glauber":
        _require(p["sites"] >= 3, "sites must be >= 3")
        _require(p["horizon"] > 0, "horizon must be positive")
        _require(p["trajectories"] >= 1 and p["snapshots"] >= 1, "trajectories and snapshots must be >= 1")
    if cmd == "cp-check":
        direct = p["channel"] is not None
        clock = p["moduli"] is not None or p["kappas"] is not None
        _require(direct or clock or p["random"] > 0, "give --channel, a clock spectrum, or --random")
        if clock:
            _require(p["D"] is not None and p["moduli"] is not None and p["kappas"] is not None,
                     "a clock spectrum needs --D, --moduli and --kappas")
        if p["random"] > 0:
            _require(p["D"] is not None and p["D"] >= 1, "--random needs --D")


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _load_tensor(spec: str, canonical: bool = True):
    from .io import read_mps
    from .mps import canonicalize

    mps = read_mps(spec)
    return canonicalize(mps)[0] if canonical else mps


def _cmd_spectrum(p, out: Path) -> dict:
    from .channel import channel_spectrum, normality_defect, transfer_matrix, unitality_defect
    from .io import read_channel

    if p["channel"] is not None:
        ch = read_channel(p["channel"])
    else:
        ch = transfer_matrix(_load_tensor(p["mps"], p["canonical"]))
    spec = channel_spectrum(ch)
    rows = [(a, lam.real, lam.imag, abs(lam), ph, int(spec.injective), int(spec.defective))
            for a, (lam, ph) in enumerate(zip(spec.eigenvalues, spec.phases))]
    write_csv(out / "spectrum.csv", ["index", "re", "im", "modulus", "phase[rad]", "injective", "defective"], rows)
    return {"eigenvalues": [[float(l.real), float(l.imag)] for l in spec.eigenvalues],
            "injective": bool(spec.injective), "defective": bool(spec.defective),
            "normality_defect": normality_defect(ch), "unitality_defect": unitality_defect(ch)}


def _cmd_dispersion(p, out: Path) -> dict:
    from .excitations import one_particle_modes

    mps = _load_tensor(p["mps"])
    ch = mps.channel()
    ks = 2 * np.pi * np.arange(p["points"]) / p["points"]
    rows = []
    for k in ks:
        for a, m in enumerate(one_particle_modes(ch, k, p["L"], truncation=p["truncation"])):
            lam = m.eigenvalue
            flag = "eigenmode" if lam is not None else "mixed"
            rows.append((k, a, abs(lam) if lam is not None else float("nan"),
                         m.phase if lam is not None else float("nan"), m.epsilon, m.energy, flag))
    write_csv(out / "dispersion.csv", ["k[rad]", "mode", "abs_lambda", "phase[rad]", "epsilon[energy]", "E_total[energy]", "flags"], rows)
    return {"rows": len(rows), "offset_per_particle": 2 * p["L"]}


def _cmd_verify(p, out: Path) -> dict:
    from .excitations import one_particle_modes
    from .mps import ParticleInsertionSpec, excited_state_vector, state_vector
    from .parent import ed_report, parent_hamiltonian

    mps = _load_tensor(p["mps"])
    N, L = p["N"], p["L"]
    ph = parent_hamiltonian(mps, N, L)
    gs = state_vector(mps, N).amplitudes
    trials, meta = [gs], [("ground", float("nan"), -1, 0.0)]
    for m in p["momenta"]:
        k = 2 * np.pi * m / N
        for a, mode in enumerate(one_particle_modes(mps.channel(), k, L)):
            psi = excited_state_vector(mps, N, ParticleInsertionSpec([(mode.X, k)], "none"))
            if psi.norm_sq < 1e-20:
                continue
            trials.append(psi.amplitudes)
            meta.append(("one-particle", k, a, mode.energy))
    rep = ed_report(ph.handle, trials, p["levels"], seed=p["seed"])
    write_csv(out / "levels.csv", ["level", "energy", "residual", "momentum[rad]"],
              [(i, e, r, k) for i, (e, r, k) in enumerate(zip(rep.eigenvalues, rep.residuals, rep.momenta))])
    write_csv(out / "trials.csv", ["kind", "k[rad]", "mode", "predicted_E", "rayleigh", "residual"],
              [(*mt, rq, r) for mt, rq, r in zip(meta, rep.rayleigh, rep.trial_residuals)])
    return {"ground_residual": float(rep.trial_residuals[0]), "ground_rayleigh": float(rep.rayleigh[0]),
            "lowest": float(rep.eigenvalues[0]) if len(rep.eigenvalues) else None,
            "hermiticity_defect": ph.term.hermiticity_defect, "projector_defect": ph.term.projector_defect}


def _cmd_bound_state(p, out: Path) -> dict:
    from .channel import channel_spectrum, structure_constants
    from .excitations import stability_diagnostics
    from .models import PM_BASIS, pm_channel

    ch = pm_channel(p["lam"], p["phi"])
    spec = channel_spectrum(ch)
    st = structure_constants(PM_BASIS)
    names = ["id", "s+", "s-", "sz"]
    rows = []
    for g in p["gamma"]:
        for L in p["L"]:
            for a in (1, 3):
                phi_a = p["phi"] if a == 1 else 0.0
                k = phi_a if p["k"] is None else p["k"]
                rep = stability_diagnostics(spec, st, a, k, L, g)
                rows.append((g, L, names[a], k, rep.eps1, rep.eps1_leakage, rep.delta, rep.sigma))
    write_csv(out / "bound_state.csv", ["gamma", "L", "mode", "k[rad]", "eps1[energy^2]", "eps1_leakage[energy^2]", "delta[energy]", "sigma"], rows)
    return {"rows": len(rows), "delta_nonnegative": bool(all(r[6] >= 0 for r in rows))}


def _cmd_localization(p, out: Path) -> dict:
    from .localization import DisorderFamily, sweep

    fam = DisorderFamily(p["family"], 0.0, p["mode"], p["samples"], p["seeds"][0])
    ts = np.logspace(np.log10(p["tmin"]), np.log10(p["tmax"]), p["points"]) if p["points"] > 1 else np.array([p["tmin"]])
    curves = sweep(fam, ts, p["N"], p["W"], p["seeds"], quenched=p["quenched"], workers=p["workers"])
    rows = [r for c in curves for r in c.rows()]
    write_csv(out / "xi.csv", ["t", "lambda", "W", "Xi[sites]"], rows)
    return {"curves": [{"W": c.W, "xi_max": float(c.xi.max()), "xi_min": float(c.xi.min())} for c in curves]}


def _cmd_glauber(p, out: Path) -> dict:
    from .errors import InsufficientStatisticsError
    from .glauber import OccupationState, correlation_check, ensemble, simulate, tau_table

    tab = tau_table(p["beta"])
    N = p["sites"]
    st = OccupationState.single(N)
    snaps = p["horizon"] * np.arange(1, p["snapshots"] + 1) / p["snapshots"]
    ens = ensemble(tab, st, snaps, p["trajectories"], p["seed"])
    logs = {}
    for i in range(p["logged"]):
        tr = simulate(tab, st, p["horizon"], p["seed"] * 1_000_003 + i)
        logs[f"t{i}"], logs[f"site{i}"], logs[f"code{i}"] = tr.times, tr.sites, tr.codes
    np.savez_compressed(out / "events.npz", **logs)
    C = ens.snapshots.mean(axis=0)
    rows = [(t, n if n <= N // 2 else n - N, C[k, n]) for k, t in enumerate(snaps) for n in range(N)]
    write_csv(out / "correlations.csv", ["t[time]", "n[sites]", "C_n"], rows)
    info = {"hop_rate": tab.hop_rate, "lambda_theory": float(np.tanh(2 * p["beta"]) / 2)}
    try:
        rep = correlation_check(ens)
        info.update(lambda_hat=rep.lambda_hat, lambda_se=rep.lambda_se, chi2=rep.chi2, dof=rep.dof,
                    envelope=rep.envelope, passed=rep.passed, symmetry=rep.symmetry)
    except InsufficientStatisticsError as exc:
        info["correlation_check"] = str(exc)
    return info


def _cmd_cp_check(p, out: Path) -> dict:
    from .channel import choi_cp_check, random_phase_spectrum, spectrum_feasibility
    from .io import read_channel

    info: dict[str, Any] = {}
    rows = []
    if p["channel"] is not None:
        rep = choi_cp_check(read_channel(p["channel"]))
        info["channel"] = {"min_choi_eigenvalue": rep.min_eigenvalue, "is_cp": rep.is_cp}
    specs = []
    if p["moduli"] is not None:
        specs.append((np.array(p["moduli"]), np.array(p["kappas"])))
    rng = np.random.default_rng(p["seed"])
    for _ in range(p["random"]):
        specs.append(random_phase_spectrum(rng, p["D"]))
    disagree = 0
    for i, (mod, kap) in enumerate(specs):
        r = spectrum_feasibility(mod, kap, p["D"])
        disagree += not r.agrees
        rows.append((i, int(r.feasible), int(r.choi.is_cp), r.margin, r.worst_alpha, r.choi.min_eigenvalue,
                     " ".join(map(str, r.active_alphas))))
    if specs:
        write_csv(out / "feasibility.csv", ["trial", "feasible", "choi_cp", "margin", "worst_alpha", "min_choi_eigenvalue", "active_alphas"], rows)
        info["trials"] = len(specs)
        info["disagreements"] = disagree
    return info


HANDLERS = {
    "spectrum": _cmd_spectrum,
    "dispersion": _cmd_dispersion,
    "verify": _cmd_verify,
    "bound-state": _cmd_bound_state,
    "localization": _cmd_localization,
    "glauber": _cmd_glauber,
    "cp-check": _cmd_cp_check,
}


def execute(cfg: RunConfig) -> tuple[int, dict]:
    """Run a resolved configuration; returns ``(exit_code, summary)``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": __version__, **cfg.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    try:
        summary = HANDLERS[cfg.command](cfg.params, out)
    except MpsexcError as exc:
        rec = exc.record()
        (out / "error.json").write_text(json.dumps(rec, indent=2))
        return exc.exit_code, rec
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    return 0, summary


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except MpsexcError as exc:
        print(json.dumps(exc.record()), file=sys.stderr)
        return exc.exit_code
    code, summary = execute(cfg)
    stream = sys.stdout if code == 0 else sys.stderr
    print(json.dumps(summary, default=float), file=stream)
    return code
