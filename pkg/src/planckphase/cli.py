"""Command-line entry point: ``planckphase {build-basis,analyze,tfa,diagnose}``.

Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numerically
degenerate frame.  Lattice values come from flags, then from a ``--config``
file of ``key = value`` lines, then from the built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tfa as tfa_mod
from .basis import (
    BasisFormatError,
    FrameDegenerateError,
    build_basis,
    load_basis,
    lowdin_defect,
    orthonormality_defect,
    random_cell_pairs,
    save_basis,
    sigma_curves,
    tail_fit,
    wannier_x,
)
from .export import write_json
from .lattice import LatticeError, LatticeParams, validate_params
from .projection import project, reconstruction_error, wannier_entropy
from .states import (
    cat_state,
    default_ho_scale,
    ho_eigenstate,
    load_state,
    load_state_csv,
    phase_space_gaussian,
    save_state,
)
from .wigner import coarse_grain, wigner_transform

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_DEGENERATE = 0, 1, 2, 3
CONFIG_KEYS = {"x0": float, "k0": float, "zeta": float,
               "jk_cutoff": int, "nk": int, "brillouin_cutoff": int}
STATES = ("gaussian-packet", "ho", "cat", "file")
NEGATIVE_TOL = 1e-9


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    params: LatticeParams
    output: Path
    fmt: str = "csv"
    verbose: int = 0
    sources: dict = field(default_factory=dict)
    args: argparse.Namespace | None = None

    def echo(self) -> dict:
        extra = {k: v for k, v in vars(self.args).items()
                 if k not in ("func", "config") and not k.startswith("lat_")}
        extra = {k: str(v) if isinstance(v, Path) else v for k, v in extra.items()}
        return {"command": self.command, "lattice": self.params.as_dict(),
                "lattice_sources": self.sources, "options": extra}


def read_config(path) -> dict:
    """Lattice keys from a ``key = value`` file; a section header is optional."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not text.lstrip().startswith("["):
        text = "[lattice]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in CONFIG_KEYS:
                raise UsageError(f"config file {path}: unknown key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](raw)
            except ValueError as exc:
                raise UsageError(f"config file {path}: bad value for {key}: {raw!r}") from exc
    return values


def resolve_params(args, defaults: LatticeParams | None = None) -> tuple[LatticeParams, dict]:
    """Merge flags over config over defaults; returns params and each key's source."""
    base = (defaults or LatticeParams()).as_dict()
    sources = {k: "default" for k in base}
    if getattr(args, "config", None):
        for key, value in read_config(args.config).items():
            base[key], sources[key] = value, "config"
    flags = {key: getattr(args, "lat_" + key, None) for key in CONFIG_KEYS}
    for key, value in flags.items():
        if value is not None:
            base[key], sources[key] = value, "cli"
    # N_k = 2 J_k when only J_k is chosen.
    if sources["jk_cutoff"] != "default" and sources["nk"] == "default":
        base["nk"], sources["nk"] = 2 * base["jk_cutoff"], "derived"
    params = validate_params(LatticeParams(**base))
    return params, sources


def _add_lattice_flags(p: argparse.ArgumentParser, n_is_cutoff: bool) -> None:
    g = p.add_argument_group("lattice")
    g.add_argument("--config", type=Path, help="key=value file with lattice keys")
    g.add_argument("--x0", dest="lat_x0", type=float)
    g.add_argument("--k0", dest="lat_k0", type=float)
    g.add_argument("--zeta", dest="lat_zeta", type=float)
    g.add_argument("--jk", dest="lat_jk_cutoff", type=int, help="band cutoff J_k")
    g.add_argument("--nk", dest="lat_nk", type=int, help="number of k-points (default 2*J_k)")
    if n_is_cutoff:
        g.add_argument("--n", "--brillouin-cutoff", dest="lat_brillouin_cutoff", type=int,
                       help="Brillouin-copy cutoff N")
    else:
        g.add_argument("--brillouin-cutoff", dest="lat_brillouin_cutoff", type=int,
                       help="Brillouin-copy cutoff N")


def _common(p: argparse.ArgumentParser, default_out: str, formats=("csv", "json", "binary")) -> None:
    p.add_argument("-o", "--output", type=Path, default=Path(default_out))
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planckphase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-basis", help="build a Wannier basis and write a WNB1 file")
    _add_lattice_flags(p, n_is_cutoff=True)
    _common(p, "basis.wnb", formats=("binary",))
    p.add_argument("--pairs", type=int, default=500, help="random pairs for the orthonormality check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_basis)

    p = sub.add_parser("analyze", help="project a state and emit figure data")
    _add_lattice_flags(p, n_is_cutoff=False)
    _common(p, "analyze-out")
    p.add_argument("--basis", type=Path, help="WNB1 basis file (built on the fly if omitted)")
    p.add_argument("--state", choices=STATES, default="gaussian-packet")
    p.add_argument("--input", type=Path, help="state file for --state file (CSV x,re,im or WNS1)")
    p.add_argument("--n", dest="level", type=int, default=30, help="oscillator level for --state ho")
    p.add_argument("--scale", default="auto", help="length scale lambda, or 'auto'")
    p.add_argument("--alpha", default="3+3i", help="cat amplitude, e.g. 3+3i")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("tfa", help="Wannier, STFT and wavelet maps of a signal")
    _add_lattice_flags(p, n_is_cutoff=True)
    _common(p, "tfa-out", formats=("csv", "json"))
    p.add_argument("--basis", type=Path)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--default-signal", action="store_true", help="use the built-in test signal")
    src.add_argument("--input", type=Path, help="signal CSV (t,value) or 16-bit mono WAV")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise", type=float, default=0.1, help="noise amplitude of the default signal")
    p.add_argument("--window", type=int, help="STFT window length in samples")
    p.add_argument("--hop", type=int, help="STFT hop in samples")
    p.set_defaults(func=cmd_tfa)

    p = sub.add_parser("diagnose", help="sigma sweep over band cutoffs")
    _add_lattice_flags(p, n_is_cutoff=True)
    _common(p, "diagnose-out", formats=("csv", "json"))
    p.add_argument("--sweep", default=None, help="comma-separated J_k values (default: --jk)")
    p.set_defaults(func=cmd_diagnose)
    return parser


def _log(config: RunConfig, message: str, level: int = 1) -> None:
    if config.verbose >= level:
        print(message, file=sys.stderr)


def _prepare_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_file(path: Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} is required")
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def parse_alpha(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise UsageError(f"cannot parse --alpha {text!r}") from exc


def parse_scale(text: str, params: LatticeParams) -> float:
    if text == "auto":
        return default_ho_scale(params)
    try:
        value = float(text)
    except ValueError as exc:
        raise UsageError(f"--scale must be 'auto' or a positive number, got {text!r}") from exc
    if not value > 0:
        raise UsageError("--scale must be positive")
    return value


def _basis_for(config: RunConfig):
    args = config.args
    if getattr(args, "basis", None) is not None:
        basis = load_basis(_require_file(args.basis, "basis file"))
        explicit = {k: v for k, v in config.sources.items() if v in ("cli", "config")}
        for key in explicit:
            if getattr(basis.params, key) != getattr(config.params, key):
                raise UsageError(f"{key} conflicts with the basis file ({getattr(basis.params, key)})")
        config.params = basis.params
        config.sources = {k: "basis-file" for k in config.sources}
        return basis
    _log(config, f"building basis for {config.params}")
    return build_basis(config.params)


def cmd_build_basis(config: RunConfig) -> int:
    out = config.output
    if out.parent and not out.parent.exists():
        raise FileNotFoundError(f"output directory does not exist: {out.parent}")
    basis = build_basis(config.params)
    save_basis(basis, out)
    rng = np.random.default_rng(config.args.seed)
    pairs = random_cell_pairs(basis.params, config.args.pairs, rng)
    p = basis.params
    print(f"wrote {out}: J_k={p.jk_cutoff} N_k={p.nk} N={p.brillouin_cutoff}")
    print(f"orthonormality defect: {orthonormality_defect(basis, pairs):.3e} over {len(pairs)} pairs; "
          f"per-k Lowdin defect: {lowdin_defect(basis):.3e}")
    return EXIT_OK


def _load_input_state(path: Path, grid):
    path = _require_file(path, "--input")
    if path.suffix.lower() == ".csv":
        return load_state_csv(path, grid)
    state = load_state(path)
    if not state.grid.matches(grid):
        raise UsageError("state file lattice differs from the basis lattice")
    return state


def _make_state(config: RunConfig, basis):
    args = config.args
    grid = basis.grid
    if args.state == "gaussian-packet":
        return phase_space_gaussian(basis), {}
    if args.state == "ho":
        lam = parse_scale(args.scale, basis.params)
        return ho_eigenstate(args.level, lam, grid), {"scale": lam, "level": args.level}
    if args.state == "cat":
        lam = parse_scale(args.scale, basis.params)
        alpha = parse_alpha(args.alpha)
        return cat_state(alpha, None, grid, lam), {"scale": lam, "alpha": alpha}
    return _load_input_state(args.input, grid), {"input": str(args.input)}


def ring_radius(prob) -> float:
    """Probability-weighted mean distance of cells from the origin, in cells."""
    jx, jk = np.meshgrid(prob.jx, prob.jk, indexing="ij")
    weight = prob.values / prob.values.sum()
    return float(np.sum(weight * np.hypot(jx, jk)))


def _negative_cells(cells, tol: float) -> list:
    return [[jx, jk, float(v)] for (jx, jk), v in cells.items() if v < -tol]


def cmd_analyze(config: RunConfig) -> int:
    args = config.args
    if args.state == "file":
        _require_file(args.input, "--input")
    out = _prepare_dir(config.output)
    basis = _basis_for(config)
    state, state_info = _make_state(config, basis)
    coeffs = project(basis, state)
    probs = coeffs.probabilities()
    defect, recon = reconstruction_error(basis, state)
    W = wigner_transform(state)
    coarse = coarse_grain(W)

    grid = basis.grid
    w00 = wannier_x(basis, (0, 0))
    np.savetxt(out / "wannier_profile.csv", np.column_stack([grid.x / basis.params.x0, w00.real, w00.imag, np.abs(w00)]),
               delimiter=",", header="x,re,im,abs", comments="")
    jk, sx, sk = sigma_curves(basis)
    np.savetxt(out / "sigma_curves.csv", np.column_stack([jk, sx, sk, sx * sk]), delimiter=",",
               header="j_k,sigma_x,sigma_k,product", comments="")
    probs.to_dense_csv(out / "probability_map.csv")
    W.to_dense_csv(out / "wigner_map.csv")
    coarse.to_dense_csv(out / "coarse_map.csv")
    if config.fmt == "csv":
        coeffs.to_csv(out / "coefficients.csv")
    elif config.fmt == "json":
        coeffs.to_json(out / "coefficients.json")
    else:
        save_state(state, out / "state.wns")

    # Raw cells whose Wigner samples dip below zero.
    nx, ppc = basis.params.n_copies, W.points_per_cell
    cell_min = W.values.reshape(len(coarse.jx), nx, len(coarse.jk), ppc).min(axis=(1, 3))
    floor = -NEGATIVE_TOL * np.abs(W.values).max()
    raw_negative = [[int(a), int(b), float(cell_min[i, j])]
                    for i, a in enumerate(coarse.jx) for j, b in enumerate(coarse.jk)
                    if cell_min[i, j] < floor]
    centre = float(coarse[(0, 0)]) if (0, 0) in coarse else None
    summary = {
        "config": config.echo(),
        "state": args.state,
        "state_info": state_info,
        "state_notes": list(state.notes),
        "parseval_defect": coeffs.completeness_defect,
        "reconstruction_error": recon,
        "entropy": wannier_entropy(probs),
        "probability_argmax": probs.argmax_cell(),
        "ring_radius_estimate": ring_radius(probs),
        "wigner": {"x_cells": W.x_cells, "k_cells": W.k_cells, "points_per_cell": W.points_per_cell},
        "raw_negative_cells": raw_negative,
        "coarse_negative_cells": _negative_cells(coarse, NEGATIVE_TOL),
        "coarse_total": float(coarse.total()),
        "coarse_center": centre,
        "coarse_max": float(coarse.values.max()),
        "coarse_argmax": coarse.argmax_cell(),
    }
    write_json(out / "summary.json", summary)
    print(f"analyzed {args.state}: parseval defect {defect:.2e}, entropy {summary['entropy']:.4f}; wrote {out}")
    return EXIT_OK


def cmd_tfa(config: RunConfig) -> int:
    args = config.args
    if args.input is not None:
        _require_file(args.input, "--input")
    out = _prepare_dir(config.output)
    spec = None
    if args.input is not None:
        signal = tfa_mod.load_signal(args.input)
    else:
        spec = tfa_mod.default_signal_spec(args.noise, args.seed)
        signal = tfa_mod.make_test_signal(spec)
    basis = _basis_for(config)
    maps = {
        "wannier": tfa_mod.wannier_tfa(signal, basis),
        "stft": tfa_mod.stft(signal, args.window, args.hop),
        "cwt": tfa_mod.cwt_morlet(signal),
    }
    for name, tf in maps.items():
        if config.fmt == "csv":
            tf.to_dense_csv(out / f"{name}_map.csv")
        else:
            write_json(out / f"{name}_map.json", {"time": tf.time_axis, "freq": tf.freq_axis,
                                                 "magnitudes": tf.magnitudes})
    wannier = maps["wannier"]
    summary = {
        "config": config.echo(),
        "signal": {"sample_rate": signal.sample_rate, "duration": signal.duration,
                   "energy": signal.energy, "source": str(args.input) if args.input else "default"},
        "parseval_defect": wannier.parseval_defect,
        "embedded_energy": wannier.extras["energy"],
        "captured_energy": wannier.extras["captured"],
        "nonzero_cells": {name: tf.nonzero_cells() for name, tf in maps.items()},
        "matrix_size": {name: tf.size for name, tf in maps.items()},
    }
    if spec is not None:
        summary["detection_ratios"] = {name: tfa_mod.detection_ratios(tf, spec) for name, tf in maps.items()}
        summary["tones_hz"] = [t.f0 for t in spec.tones()]
    write_json(out / "summary.json", summary)
    print(f"tfa: parseval defect {wannier.parseval_defect:.2e}; wrote {out}")
    return EXIT_OK


def cmd_diagnose(config: RunConfig) -> int:
    args = config.args
    out = _prepare_dir(config.output)
    if args.sweep:
        try:
            cutoffs = [int(v) for v in args.sweep.split(",")]
        except ValueError as exc:
            raise UsageError(f"--sweep must be comma-separated integers, got {args.sweep!r}") from exc
    else:
        cutoffs = [config.params.jk_cutoff]
    rows = []
    for J in cutoffs:
        nk = config.params.nk if config.sources["nk"] in ("cli", "config") else 2 * J
        params = validate_params(config.params.replace(jk_cutoff=J, nk=nk))
        basis = build_basis(params)
        jk, sx, sk = sigma_curves(basis)
        np.savetxt(out / f"sigma_curves_J{J}.csv", np.column_stack([jk, sx, sk, sx * sk]), delimiter=",",
                   header="j_k,sigma_x,sigma_k,product", comments="")
        centre = J
        fits = {space: tail_fit(basis, space=space) for space in ("x", "k")}
        rows.append({
            "jk_cutoff": J, "nk": nk,
            "sigma_x0": float(sx[centre]), "sigma_k0": float(sk[centre]),
            "argmax_sigma_x": int(jk[np.argmax(sx)]), "argmax_sigma_k": int(jk[np.argmax(sk)]),
            "edge_product": float(sx[-1] * sk[-1]),
            "tail_slope": {s: f.slope for s, f in fits.items()},
            "tail_r2": {s: f.r_squared for s, f in fits.items()},
        })
        _log(config, f"J_k={J}: sigma_x(0)={sx[centre]:.5f} sigma_k(0)={sk[centre]:.5f}")
    summary = {"config": config.echo(), "sweep": rows}
    write_json(out / "summary.json", summary)
    print(f"diagnose: {len(rows)} cutoff(s); wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        params, sources = resolve_params(args)
        config = RunConfig(args.command, params, args.output, args.format, args.verbose, sources, args)
        return args.func(config)
    except FrameDegenerateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FileNotFoundError, PermissionError, IsADirectoryError, BasisFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LatticeError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
