"""Command-line front end.

Every file written by a subcommand is listed in a ``*.manifest.json`` next to
it.  The manifest carries the canonical argument vector, so
:func:`rerun_manifest` regenerates the outputs bit-exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EaemError
from .rng import generate_seed

RANDOMIZED = ("speckle", "inelastic", "protocol", "image", "reproduce-paper")


@dataclass
class RunManifest:
    """Provenance of one CLI run (no timestamps, so reruns are byte-identical)."""

    subcommand: str
    parameters: dict
    seed: int | None
    tool_version: str = __version__
    outputs: list = field(default_factory=list)
    argv: list = field(default_factory=list)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------- helpers

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit_json(args, payload: dict, files: list):
    """Write JSON to ``--out`` (recorded for the manifest) or stdout."""
    if args.out:
        Path(args.out).write_text(_dump(payload))
        files.append(Path(args.out))
    else:
        sys.stdout.write(_dump(payload))


def _write_table(path, header, columns) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(x)) for x in row])
    return Path(path)


def _prefix(args, default):
    p = Path(args.out_prefix or default)
    if p.parent != Path(""):
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _composition(args):
    from .specimen import builtin_composition, derive_composition, protein_stoichiometry
    if getattr(args, "derive", False):
        stoich = None
        if args.residue_table:
            with open(args.residue_table, newline="") as fh:
                freq = {row["residue"].strip(): float(row["frequency"]) for row in csv.DictReader(fh)}
            stoich = protein_stoichiometry(freq)
        return derive_composition(args.water_fraction, args.ice_density, args.protein_density,
                                  stoich, thickness=args.thickness)
    return builtin_composition(args.thickness)


def _amplitudes(args):
    from .specimen import AnalyticAmplitudes, default_tabulated_amplitudes, load_amplitude_csv
    if args.amplitude_csv:
        return load_amplitude_csv(args.amplitude_csv, args.energy)
    if args.amplitudes == "analytic":
        return AnalyticAmplitudes()
    return default_tabulated_amplitudes()


# ---------------------------------------------------------------- subcommands

def cmd_params(args, files):
    from .elastic_speckle import focused_probe
    from .inelastic import inelastic_model
    from .kinematics import electron_parameters
    b = electron_parameters(args.energy)
    m = inelastic_model(b, args.eloss)
    g = focused_probe(b, args.waist)
    _emit_json(args, {
        "kinetic_energy_keV": b.kinetic_energy, "gamma": b.gamma, "beta": b.beta,
        "wavenumber_per_nm": b.wavenumber_k, "wavelength_pm": b.wavelength_pm,
        "m_v_squared_keV": b.m_v_squared, "energy_loss_eV": args.eloss,
        "theta_E_rad": m.theta_E, "theta_cut_rad": m.theta_cut, "b_max_nm": m.b_max,
        "waist_nm": args.waist, "theta_G_rad": g.divergence, "rayleigh_range_nm": g.rayleigh_range,
    }, files)


def cmd_composition(args, files):
    comp = _composition(args)
    _emit_json(args, comp.to_dict(), files)


def cmd_xsec(args, files):
    from .kinematics import electron_parameters
    from .specimen import (default_inner_shell_table, inelastic_probability_from_elastic,
                           inner_shell_probability, load_inner_shell_csv, rounded_inelastic_probability,
                           total_elastic_probability)
    b = electron_parameters(args.energy)
    comp = _composition(args)
    src = _amplitudes(args)
    present = [el for el, n in comp.areal_density.items() if n > 0]
    p_d = total_elastic_probability(comp, src, b)
    table = load_inner_shell_csv(args.inner_shell_csv) if args.inner_shell_csv else default_inner_shell_table()
    _emit_json(args, {
        "composition": comp.to_dict(),
        "cross_section_nm2": {el: src.cross_section(el, b) for el in present},
        "p_d": p_d,
        "p_inner_shell": inner_shell_probability(comp, table),
        "p_inel_twice_elastic": inelastic_probability_from_elastic(p_d),
        "p_inel_rounded": rounded_inelastic_probability(p_d),
    }, files)


def cmd_speckle(args, files):
    from .elastic_speckle import (DIVERGING, diverging_probe, focused_probe, mean_scattered_intensity_diverging,
                                  h_function, speckle_moments_focused, speckle_monte_carlo,
                                  speckle_threshold_and_failure, transmitted_far_field)
    from .kinematics import electron_parameters
    b = electron_parameters(args.energy)
    comp = _composition(args)
    src = _amplitudes(args)
    pre = _prefix(args, PREFIX_DEFAULTS["speckle"])
    if args.mode == DIVERGING:
        geom = (diverging_probe(b, args.defocus, waist=args.waist) if args.waist
                else diverging_probe(b, args.defocus, divergence=args.divergence))
    else:
        geom = focused_probe(b, args.waist or 0.5)
    theta = np.linspace(args.theta_max / args.n_theta, args.theta_max, args.n_theta)
    summary = {"probe": geom.to_dict(), "composition": comp.to_dict()}
    T = transmitted_far_field(geom, theta)
    T2 = np.abs(T) ** 2
    if geom.mode == DIVERGING:
        H = np.array([float(h_function(comp, src, geom, t)) for t in theta])
        E = np.array([float(mean_scattered_intensity_diverging(comp, src, geom, t)) for t in theta])
        summary.update(speckle_threshold_and_failure(comp, src, geom).to_dict())
    else:
        H = np.full(theta.shape, np.nan)
        ok = theta >= 3.0 * geom.divergence
        E = np.full(theta.shape, np.nan)
        if np.any(ok):
            E[ok] = speckle_moments_focused(comp, src, geom, theta[ok])[0]
    summary["epsilon"] = geom.epsilon if geom.mode == DIVERGING else None
    summary["theta_G_rad"] = geom.divergence
    files.append(_write_table(f"{pre}_curves.csv", ["theta_rad", "transmitted_intensity",
                                                    "mean_scattered_intensity", "H"], [theta, T2, E, H]))
    if args.mc_configs:
        mc = speckle_monte_carlo(comp, src, geom, args.mc_theta, args.mc_configs, args.seed,
                                 threads=args.threads)
        summary["monte_carlo"] = {"theta_rad": mc.theta, "n_configs": mc.n_configs, "mean": mc.mean,
                                  "stderr_mean": mc.stderr_mean, "variance": mc.variance,
                                  "var_over_mean_squared": mc.ratio, "stderr_ratio": mc.stderr_ratio}
        if geom.mode != DIVERGING:
            summary["monte_carlo"]["analytic_mean"] = float(
                speckle_moments_focused(comp, src, geom, args.mc_theta)[0])
    path = Path(f"{pre}_summary.json")
    path.write_text(_dump(summary))
    files.append(path)
    sys.stdout.write(_dump(summary))


def cmd_inelastic(args, files):
    from .inelastic import angle_cdf, inelastic_model, sample_angles
    from .kinematics import electron_parameters
    m = inelastic_model(electron_parameters(args.energy), args.eloss, args.pinel)
    pre = _prefix(args, PREFIX_DEFAULTS["inelastic"])
    theta = np.linspace(0.0, m.theta_cut, args.n_cdf)
    files.append(_write_table(f"{pre}_cdf.csv", ["theta_rad", "cdf"], [theta, angle_cdf(m, theta)]))
    summary = m.to_dict()
    if args.samples > 0:
        th = sample_angles(m, args.samples, args.seed)
        counts, edges = np.histogram(th, bins=args.bins, range=(0.0, m.theta_cut))
        files.append(_write_table(f"{pre}_histogram.csv", ["theta_lo_rad", "theta_hi_rad", "count"],
                                  [edges[:-1], edges[1:], counts]))
        summary.update(samples=args.samples, sample_median_rad=float(np.median(th)),
                       sample_mean_rad=float(th.mean()))
    path = Path(f"{pre}_summary.json")
    path.write_text(_dump(summary))
    files.append(path)
    sys.stdout.write(_dump(summary))


def _error_model(args):
    from .inelastic import inelastic_model
    from .kinematics import electron_parameters
    from .protocol import ErrorModel
    m = inelastic_model(electron_parameters(args.energy), args.eloss)
    return ErrorModel(p_fail=args.pfail, p_inel=args.pinel, d01=args.d01, inelastic=m, policy=args.policy)


def cmd_protocol(args, files):
    from .protocol import replicate_estimates, run_processes, spoil_probability
    em = _error_model(args)
    n = args.n // args.k
    res = run_processes(n, args.k, args.delta_phi, em, args.seed, args.estimator, threads=args.threads)
    out = res.to_dict()
    out.update(delta_phi=args.delta_phi, n_electrons=args.n, expected_spoil_rate=spoil_probability(args.k, args.pfail))
    if args.replicates > 1:
        est = replicate_estimates(args.replicates, args.n, args.k, args.delta_phi, em, args.seed + 1,
                                  estimator=args.estimator, threads=args.threads)
        out.update(replicates=args.replicates, empirical_variance=float(np.nanvar(est, ddof=1)),
                   ideal_variance=1.0 / (args.k * args.n))
    else:
        out["empirical_variance"] = None
    _emit_json(args, out, files)


def cmd_image(args, files):
    from .imaging import (ImageJob, PhaseMap, ProbeFootprints, gaussian_smooth, laplacian_filter, make_phantom,
                          rms_error, simulate_conventional_image, simulate_entangled_image)
    from .mapio import read_csv, read_pgm, write_csv, write_pgm
    if args.map:
        path = Path(args.map)
        if path.suffix.lower() == ".csv":
            if args.pixel_size is None:
                from .errors import ConfigurationError
                raise ConfigurationError("CSV maps need --pixel-size")
            pm = read_csv(path, args.pixel_size)
        else:
            pm = read_pgm(path, args.pixel_size)
    else:
        pm = make_phantom(args.phantom, args.amplitude, args.size, args.pixel_size or 0.3)
    em = _error_model(args)
    job = ImageJob(pm, args.dose, args.k, ProbeFootprints(args.sigma_inner, args.sigma_outer, args.d01),
                   em, args.estimator, args.seed)
    ent = simulate_entangled_image(job, threads=args.threads)
    conv = simulate_conventional_image(job, threads=args.threads)
    pre = _prefix(args, PREFIX_DEFAULTS["image"])

    def post(values):
        out = PhaseMap(np.nan_to_num(values, nan=0.0), pm.pixel_size)
        if args.smooth_sigma > 0:
            out = gaussian_smooth(out, args.smooth_sigma)
        if args.filter == "laplacian":
            out = laplacian_filter(out)
        return out

    for name, values in (("truth", ent.delta_phi), ("entangled", ent.estimate), ("conventional", conv)):
        m = post(values)
        files.extend(write_pgm(f"{pre}_{name}.pgm", m, binary=args.format == "p5"))
        files.append(write_csv(f"{pre}_{name}.csv", m.values))
    files.append(write_csv(f"{pre}_spoil_rate.csv", ent.spoil_rate))
    summary = {
        "width": pm.width, "height": pm.height, "pixel_size_nm": pm.pixel_size,
        "electrons_per_pixel": job.electrons_per_pixel, "processes_per_pixel": job.processes_per_pixel,
        "unused_electrons_per_pixel": job.unused_electrons_per_pixel,
        "rms_entangled": rms_error(ent.estimate, ent.delta_phi),
        "rms_conventional": rms_error(conv, ent.delta_phi),
        "mean_spoil_rate": float(ent.spoil_rate.mean()),
        "unusable_pixels": int(np.sum(~np.isfinite(ent.estimate))),
    }
    path = Path(f"{pre}_summary.json")
    path.write_text(_dump(summary))
    files.append(path)
    sys.stdout.write(_dump(summary))


def cmd_reproduce(args, files):
    from .reproduce import report_json, report_text, run_all
    checks = run_all(args.seed, threads=args.threads, only=set(args.only) if args.only else None)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = report_text(checks, args.seed)
    (out / "report.txt").write_text(text)
    (out / "report.json").write_text(report_json(checks, args.seed))
    files.extend([out / "report.txt", out / "report.json"])
    sys.stdout.write(text)
    if args.strict and any(c.passed is False for c in checks):
        return 1
    return 0


# ---------------------------------------------------------------- parser

def _count(text: str) -> int:
    """Integer option that also accepts exact scientific notation such as 1e6."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count: {text!r}") from None
    if not v.is_integer():
        raise argparse.ArgumentTypeError(f"count must be a whole number: {text!r}")
    return int(v)


def _add_beam(p, eloss=False):
    p.add_argument("--energy", type=float, default=300.0, help="kinetic energy [keV] (default 300)")
    if eloss:
        p.add_argument("--eloss", type=float, default=20.0, help="plasmon energy loss [eV] (default 20)")


def _add_specimen(p):
    p.add_argument("--thickness", type=float, default=30.0, help="slab thickness [nm] (default 30)")
    p.add_argument("--derive", action="store_true", help="derive densities from a water/protein mixture")
    p.add_argument("--water-fraction", type=float, default=0.76, help="water mass fraction (default 0.76)")
    p.add_argument("--ice-density", type=float, default=0.94, help="[g/cc] (default 0.94)")
    p.add_argument("--protein-density", type=float, default=1.35, help="[g/cc] (default 1.35)")
    p.add_argument("--residue-table", help="CSV with columns residue,frequency (3-letter codes)")


def _add_amplitudes(p):
    p.add_argument("--amplitudes", choices=("tabulated", "analytic"), default="tabulated")
    p.add_argument("--amplitude-csv", help="table theta_rad,g_H,g_C,... in nm (overrides --amplitudes)")


def _add_errors(p, k_default):
    p.add_argument("--k", type=int, default=k_default, help="electrons per process")
    p.add_argument("--pfail", type=float, default=0.0, help="destructive probability per electron")
    p.add_argument("--pinel", type=float, default=0.0, help="plasmon probability per electron")
    p.add_argument("--d01", type=float, default=30.0, help="beam separation [nm] (default 30)")
    p.add_argument("--estimator", choices=("arcsine", "linear"), default="arcsine")
    p.add_argument("--policy", choices=("randomize", "discard"), default="randomize",
                   help="treatment of spoiled processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eaem", description="Entanglement-assisted electron microscopy simulator")
    ap.add_argument("--version", action="version", version=f"eaem {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker cap (does not change results)")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_, seeded=False):
        p = sub.add_parser(name, help=help_, parents=[common])
        if seeded:
            p.add_argument("--seed", type=int, default=None, help="RNG seed (generated and printed if omitted)")
        return p

    p = add("params", "beam kinematics and inelastic angles")
    _add_beam(p, eloss=True)
    p.add_argument("--waist", type=float, default=0.5, help="focused probe waist w0 [nm]")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = add("composition", "element number densities")
    _add_specimen(p)
    p.add_argument("--out")

    p = add("xsec", "cross sections and event probabilities")
    _add_beam(p)
    _add_specimen(p)
    _add_amplitudes(p)
    p.add_argument("--inner-shell-csv", help="table element,sigma_nm2")
    p.add_argument("--out")

    p = add("speckle", "transmitted vs scattered intensity curves", seeded=True)
    _add_beam(p)
    _add_specimen(p)
    _add_amplitudes(p)
    p.add_argument("--mode", choices=("focused", "diverging"), default="diverging")
    p.add_argument("--waist", type=float, default=None, help="probe waist [nm]")
    p.add_argument("--divergence", type=float, default=0.040, help="diverging half-angle [rad] (default 0.04)")
    p.add_argument("--defocus", type=float, default=22.5, help="waist-to-specimen distance [nm]")
    p.add_argument("--theta-max", type=float, default=0.2, help="[rad]")
    p.add_argument("--n-theta", type=int, default=200)
    p.add_argument("--mc-configs", type=int, default=0, help="Monte Carlo configurations (0 = none)")
    p.add_argument("--mc-theta", type=float, default=0.010, help="[rad]")
    p.add_argument("--out-prefix")

    p = add("inelastic", "plasmon angular law and samples", seeded=True)
    _add_beam(p, eloss=True)
    p.add_argument("--pinel", type=float, default=0.10)
    p.add_argument("--samples", type=_count, default=0)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--n-cdf", type=int, default=201)
    p.add_argument("--out-prefix")

    p = add("protocol", "k-electron phase estimation", seeded=True)
    _add_beam(p, eloss=True)
    _add_errors(p, 10)
    p.add_argument("--n", type=_count, default=10 ** 6, help="electron dose N")
    p.add_argument("--delta-phi", type=float, default=1e-3, help="[rad]")
    p.add_argument("--replicates", type=int, default=0, help="replicates for the empirical variance")
    p.add_argument("--out")

    p = add("image", "simulated entangled and conventional images", seeded=True)
    _add_beam(p, eloss=True)
    _add_errors(p, 36)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--map", help="phase map (.pgm with sidecar, or .csv)")
    src.add_argument("--phantom", choices=("disc", "shell", "sinusoid", "blob-cluster"), default="blob-cluster")
    p.add_argument("--amplitude", type=float, default=5e-3, help="phantom peak [rad]")
    p.add_argument("--size", type=int, default=100)
    p.add_argument("--pixel-size", type=float, default=None, help="[nm] (phantom default 0.3)")
    p.add_argument("--dose", type=float, default=400.0, help="[e/nm^2]")
    p.add_argument("--sigma-inner", type=float, default=0.15, help="[nm]")
    p.add_argument("--sigma-outer", type=float, default=0.75, help="[nm]")
    p.add_argument("--smooth-sigma", type=float, default=0.0, help="display smoothing [nm]")
    p.add_argument("--filter", choices=("none", "laplacian"), default="none")
    p.add_argument("--format", choices=("p5", "p2"), default="p5")
    p.add_argument("--out-prefix")

    p = add("reproduce-paper", "acceptance battery with pass/fail table", seeded=True)
    p.add_argument("--out-dir", default="reproduce")
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers")
    p.add_argument("--strict", action="store_true", help="exit 1 if any check fails")
    return ap


HANDLERS = {"params": cmd_params, "composition": cmd_composition, "xsec": cmd_xsec, "speckle": cmd_speckle,
            "inelastic": cmd_inelastic, "protocol": cmd_protocol, "image": cmd_image,
            "reproduce-paper": cmd_reproduce}


def _canonical_argv(args, parser_dests) -> list:
    """Subcommand plus every resolved option, so reruns need no defaults."""
    argv = [args.command]
    for dest, flag, is_flag in parser_dests:
        v = getattr(args, dest)
        if v is None or dest == "threads":
            continue
        if is_flag:
            if v:
                argv.append(flag)
        elif isinstance(v, list):
            argv += [flag] + [str(x) for x in v]
        else:
            argv += [flag, repr(v) if isinstance(v, float) else str(v)]
    return argv


def _dests(parser, command):
    sp = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    out = []
    for a in sp._actions:
        if a.option_strings and a.dest != "help":
            out.append((a.dest, a.option_strings[0], a.nargs == 0))
    return out


def run(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the exit code (0 ok, 1 domain error, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command in RANDOMIZED and args.seed is None:
        args.seed = generate_seed()
        print(f"seed: {args.seed}", file=sys.stderr)
    files: list = []
    try:
        code = HANDLERS[args.command](args, files) or 0
    except (EaemError, OSError) as exc:
        print(f"eaem {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if files:
        argv_c = _canonical_argv(args, _dests(parser, args.command))
        params = {k: v for k, v in vars(args).items() if k not in ("command", "threads")}
        man = RunManifest(args.command, params, getattr(args, "seed", None),
                          outputs=[str(f) for f in files], argv=argv_c)
        man.write(_manifest_path(args))
    return code


PREFIX_DEFAULTS = {"speckle": "speckle", "inelastic": "inelastic", "image": "image"}


def _manifest_path(args) -> Path:
    if args.command == "reproduce-paper":
        return Path(args.out_dir) / "manifest.json"
    if args.command in PREFIX_DEFAULTS:
        return Path(f"{_prefix(args, PREFIX_DEFAULTS[args.command])}.manifest.json")
    return Path(args.out).with_suffix(".manifest.json")


def rerun_manifest(path) -> int:
    """Re-execute the run recorded in a manifest file."""
    man = json.loads(Path(path).read_text())
    return run(man["argv"])


def main() -> None:
    sys.exit(run())
