"""Command line surface: synthesize scenes, unmix cubes, evaluate
estimates against references, and sweep SNR grids.

Config files are flat ``key = value`` text with ``#`` comments; the
accepted keys are documented in the README.  Every artifact-writing
command also writes a ``manifest.json`` recording the resolved
configuration, seeds and input digests needed to reproduce the run.
"""

import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, cubeio, plots
from .fcls import FclsConfig, fcls_image
from .metrics import evaluate
from .mlnmf import MlnmfConfig, unmix
from .nmf_core import LayerFitConfig, SparsityWeights, estimate_sparsity_weight
from .synthgen import SceneSpec, generate_scene, load_library, sample_library, sample_library_path
from .vca import vca

log = logging.getLogger("hsunmix")

METHODS = ("mlnmf", "l12nmf", "vca")
VERBOSITY_ENV = "HSUNMIX_VERBOSITY"
_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING, "quiet": logging.ERROR}


class CliError(Exception):
    """User-facing configuration or input error."""


def derive_seed(*parts):
    """Stable 64-bit seed from a tuple of run coordinates."""
    text = "|".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


# ---------------------------------------------------------------------------
# config files


def parse_config_file(path):
    values = {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise CliError(f"cannot read config file {path}: {err}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in values:
            raise CliError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _reject_unknown(values, source):
    if values:
        raise CliError(f"{source}: unknown key(s) {sorted(values)}")


def _pop_float(values, key, default, source, allow_inf=False):
    raw = values.pop(key, None)
    if raw is None:
        return default
    try:
        out = float(raw)
    except ValueError:
        raise CliError(f"{source}: {key} must be a number, got {raw!r}") from None
    if not allow_inf and not np.isfinite(out):
        raise CliError(f"{source}: {key} must be finite, got {raw!r}")
    return out


def _pop_int(values, key, default, source):
    raw = values.pop(key, None)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{source}: {key} must be an integer, got {raw!r}") from None


def _pop_bool(values, key, default, source):
    raw = values.pop(key, None)
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise CliError(f"{source}: {key} must be a boolean, got {raw!r}")


def _pop_optional_float(values, key, source, off_words=("off", "none", "auto")):
    raw = values.pop(key, None)
    if raw is None:
        return "unset"
    if raw.lower() in off_words:
        return None
    try:
        return float(raw)
    except ValueError:
        raise CliError(f"{source}: {key} must be a number or one of {off_words}, got {raw!r}") from None


def load_scene_setup(spec_path):
    """Parse a scene spec file; returns (library, library_source, SceneSpec)."""
    source = str(spec_path)
    values = parse_config_file(spec_path)
    library_ref = values.pop("library", "sample")
    names_raw = values.pop("endmember_names", None)
    names = tuple(n.strip() for n in names_raw.split(",")) if names_raw else None
    rows = _pop_int(values, "grid_rows", 64, source)
    cols = _pop_int(values, "grid_cols", 64, source)
    spec_kwargs = dict(
        endmember_names=names,
        grid=(rows, cols),
        block_size=_pop_int(values, "block_size", 8, source),
        lowpass_window=_pop_int(values, "lowpass_window", 9, source),
        purity_threshold=_pop_float(values, "purity_threshold", 0.8, source),
        snr_db=_pop_float(values, "snr_db", 30.0, source, allow_inf=True),
        seed=_pop_int(values, "seed", 0, source),
    )
    _reject_unknown(values, source)
    try:
        spec = SceneSpec(**spec_kwargs)
    except ValueError as err:
        raise CliError(f"{source}: {err}") from None
    if library_ref == "sample":
        library = sample_library()
    else:
        library = load_library(library_ref)
    return library, library_ref, spec


@dataclass(frozen=True)
class UnmixOptions:
    """Solver options shared by unmix and sweep, as parsed from a config file.

    ``alpha``/``lam`` of None mean "resolve from the data"; asc_delta and
    fcls_delta of None mean "disabled" and "automatic" respectively.
    """

    layer_count: int = 3
    alpha: float | None = None
    lam: float | None = None
    max_iters: int = 300
    rel_tol: float = 1e-6
    epsilon_floor: float = 1e-9
    asc_delta: float | None = 15.0
    seed: int = 0
    init_mode: str = "vca"
    final_fcls: bool = True
    fcls_delta: float | None = None
    fcls_tol: float = 1e-9
    fcls_max_iters: int = 200


def load_unmix_options(config_path):
    if config_path is None:
        return UnmixOptions()
    source = str(config_path)
    values = parse_config_file(config_path)
    alpha = _pop_optional_float(values, "alpha", source)
    lam = _pop_optional_float(values, "lambda", source)
    asc = _pop_optional_float(values, "asc_delta", source)
    fcls_delta = _pop_optional_float(values, "fcls_delta", source)
    options = UnmixOptions(
        layer_count=_pop_int(values, "layer_count", 3, source),
        alpha=None if alpha == "unset" else alpha,
        lam=None if lam == "unset" else lam,
        max_iters=_pop_int(values, "max_iters", 300, source),
        rel_tol=_pop_float(values, "rel_tol", 1e-6, source),
        epsilon_floor=_pop_float(values, "epsilon_floor", 1e-9, source),
        asc_delta=15.0 if asc == "unset" else asc,
        seed=_pop_int(values, "seed", 0, source),
        init_mode=values.pop("init_mode", "vca"),
        final_fcls=_pop_bool(values, "final_fcls", True, source),
        fcls_delta=None if fcls_delta in ("unset", None) else fcls_delta,
        fcls_tol=_pop_float(values, "fcls_tol", 1e-9, source),
        fcls_max_iters=_pop_int(values, "fcls_max_iters", 200, source),
    )
    _reject_unknown(values, source)
    if options.alpha is None and alpha not in ("unset", None):
        raise CliError(f"{source}: alpha cannot be disabled, use 0")
    if options.lam is None and lam not in ("unset", None):
        raise CliError(f"{source}: lambda cannot be disabled, use 0")
    return options


# ---------------------------------------------------------------------------
# solver dispatch shared by unmix and sweep


def _resolve_weights(x, method, options):
    estimate = None
    alpha, lam = options.alpha, options.lam
    if method == "l12nmf":
        alpha = 0.0
    if alpha is None or lam is None:
        estimate = estimate_sparsity_weight(x)
    if alpha is None:
        alpha = 0.1 * estimate
    if lam is None:
        lam = estimate
    return SparsityWeights(basis=alpha, coeffs=lam)


def _fcls_config(options):
    return FclsConfig(
        delta=options.fcls_delta,
        max_active_set_iters=options.fcls_max_iters,
        tol=options.fcls_tol,
    )


def solve_cube(x, endmember_count, method, options, seed=None):
    """Run one unmixing method; returns (endmembers, abundances, result, weights).

    ``result`` is the UnmixResult for NMF methods and the VcaResult for
    the plain VCA baseline.
    """
    if method not in METHODS:
        raise CliError(f"unknown method {method!r}, expected one of {METHODS}")
    seed = options.seed if seed is None else seed
    fcls_cfg = _fcls_config(options)
    if method == "vca":
        result = vca(x, endmember_count, seed)
        abundances = fcls_image(result.endmembers, x, fcls_cfg)
        return result.endmembers, abundances, result, None
    weights = _resolve_weights(x, method, options)
    cfg = MlnmfConfig(
        layer_count=1 if method == "l12nmf" else options.layer_count,
        weights=weights,
        layer_fit=LayerFitConfig(
            max_iters=options.max_iters,
            rel_tol=options.rel_tol,
            epsilon_floor=options.epsilon_floor,
            asc_delta=options.asc_delta,
            seed=seed,
        ),
        init_mode=options.init_mode,
        final_fcls=options.final_fcls,
        fcls=fcls_cfg,
    )
    result = unmix(x, endmember_count, cfg)
    return result.endmembers, result.abundances, result, weights


def _floor_for_export(abundances, floor):
    out = np.asarray(abundances, dtype=float).copy()
    out[out < floor] = 0.0
    return out


def _options_payload(options, method, weights):
    payload = {
        "method": method,
        "layer_count": 1 if method == "l12nmf" else options.layer_count,
        "max_iters": options.max_iters,
        "rel_tol": options.rel_tol,
        "epsilon_floor": options.epsilon_floor,
        "asc_delta": options.asc_delta,
        "seed": options.seed,
        "init_mode": options.init_mode,
        "final_fcls": options.final_fcls,
        "fcls_delta": options.fcls_delta,
        "fcls_tol": options.fcls_tol,
        "fcls_max_iters": options.fcls_max_iters,
    }
    if weights is not None:
        payload["alpha"] = weights.basis
        payload["lambda"] = weights.coeffs
    return payload


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    library, library_ref, spec = load_scene_setup(args.spec_file)
    scene = generate_scene(library, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, cols = scene.grid

    cubeio.write_cube(out_dir / "observations", scene.observations, rows, cols)
    cubeio.write_matrix_csv(out_dir / "endmembers_true.csv", scene.endmembers, scene.names,
                            library.wavelengths)
    cubeio.write_cube(out_dir / "abundances_true", scene.abundances, rows, cols)

    library_path = sample_library_path() if library_ref == "sample" else Path(library_ref)
    outputs = {}
    for name in ("observations.f64", "observations.json", "endmembers_true.csv",
                 "abundances_true.f64", "abundances_true.json"):
        outputs[name] = cubeio.file_digest(out_dir / name)
    manifest = {
        "command": "synth",
        "version": __version__,
        "library": {"source": library_ref, "digest": cubeio.file_digest(library_path)},
        "scene_spec": {
            "endmember_names": list(scene.names),
            "grid_rows": rows,
            "grid_cols": cols,
            "block_size": spec.block_size,
            "lowpass_window": spec.lowpass_window,
            "purity_threshold": spec.purity_threshold,
            "snr_db": spec.snr_db,
            "seed": spec.seed,
        },
        "outputs": outputs,
    }
    cubeio.write_manifest(out_dir / "manifest.json", manifest)
    log.info("synth: wrote %d-band %dx%d scene with %d endmembers to %s",
             scene.observations.shape[0], rows, cols, len(scene.names), out_dir)
    return 0


def cmd_unmix(args):
    x, header = cubeio.read_cube(args.cube)
    options = load_unmix_options(args.config)
    endmembers, abundances, result, weights = solve_cube(
        x, args.endmembers, args.method, options
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = endmembers.shape[1]
    names = [f"endmember_{j + 1}" for j in range(count)]

    cubeio.write_matrix_csv(out_dir / "endmembers.csv", endmembers, names)
    rows, cols = header.get("rows"), header.get("cols")
    cubeio.write_cube(out_dir / "abundances",
                      _floor_for_export(abundances, options.epsilon_floor), rows, cols)

    outputs = ["endmembers.csv", "abundances.f64", "abundances.json"]
    layers = []
    if args.method != "vca":
        with open(out_dir / "cost_trace.csv", "w", newline="") as handle:
            handle.write("layer,iteration,objective\n")
            for layer_index, trace in enumerate(result.traces, start=1):
                for iteration, value in enumerate(trace.values):
                    handle.write(f"{layer_index},{iteration},{value!r}\n")
        outputs.append("cost_trace.csv")
        for layer_index, factor in enumerate(result.layer_factors, start=1):
            factor_name = f"layer_factor_{layer_index:02d}.csv"
            cubeio.write_matrix_csv(out_dir / factor_name, factor,
                                    [f"column_{j + 1}" for j in range(factor.shape[1])])
            outputs.append(factor_name)
        layers = [
            {
                "iterations": len(trace.values) - 1,
                "converged_at": trace.converged_at,
                "final_objective": trace.values[-1],
            }
            for trace in result.traces
        ]

    cube_payload, cube_header = cubeio.cube_paths(args.cube)
    manifest = {
        "command": "unmix",
        "version": __version__,
        "endmember_count": args.endmembers,
        "inputs": {
            "cube_payload_digest": cubeio.file_digest(cube_payload),
            "cube_header_digest": cubeio.file_digest(cube_header),
            "config": None if args.config is None else {
                "path": str(args.config),
                "digest": cubeio.file_digest(args.config),
            },
        },
        "config": _options_payload(options, args.method, weights),
        "layers": layers,
        "outputs": {name: cubeio.file_digest(out_dir / name) for name in outputs},
    }
    if args.method == "vca":
        manifest["vca_pixel_indices"] = list(result.pixel_indices)
    cubeio.write_manifest(out_dir / "manifest.json", manifest)
    log.info("unmix: method=%s endmembers=%d -> %s", args.method, count, out_dir)
    return 0


def cmd_eval(args):
    est_dir = Path(args.est_dir)
    est_endmembers, _, _ = cubeio.read_matrix_csv(est_dir / "endmembers.csv")
    est_abundances = est_header = None
    if (est_dir / "abundances.json").exists():
        est_abundances, est_header = cubeio.read_cube(est_dir / "abundances")

    ref_names = None
    ref_abundances = None
    if args.truth_dir is not None:
        truth_dir = Path(args.truth_dir)
        ref_endmembers, ref_names, _ = cubeio.read_matrix_csv(truth_dir / "endmembers_true.csv")
        ref_source = str(truth_dir)
        if est_abundances is not None and (truth_dir / "abundances_true.json").exists():
            ref_abundances, _ = cubeio.read_cube(truth_dir / "abundances_true")
    else:
        ref_endmembers, ref_names, _ = cubeio.read_matrix_csv(args.reference_csv)
        ref_source = str(args.reference_csv)

    if ref_endmembers.shape != est_endmembers.shape:
        raise CliError(
            f"estimate shape {est_endmembers.shape} does not match "
            f"reference shape {ref_endmembers.shape}"
        )
    report = evaluate(ref_endmembers, est_endmembers, ref_abundances, est_abundances)

    method = "unknown"
    est_manifest_path = est_dir / "manifest.json"
    if est_manifest_path.exists():
        method = cubeio.read_manifest(est_manifest_path).get("config", {}).get("method", "unknown")

    out_dir = Path(args.out_dir) if args.out_dir else est_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"method": method, "reference": ref_source, **report.as_dict()}
    cubeio.write_manifest(out_dir / "report.json", payload)

    lines = [f"method = {method}", f"reference = {ref_source}"]
    lines.append("permutation = " + ",".join(str(i) for i in report.permutation))
    for index, (name, angle) in enumerate(zip(ref_names, report.sad_per_endmember)):
        lines.append(f"sad[{name or index}] = {angle:.6f}")
    lines.append(f"rms_sad = {report.rms_sad:.6f}")
    if report.rms_aad is not None:
        lines.append(f"aad_mean = {report.aad_mean:.6f}")
        lines.append(f"aad_max = {report.aad_max:.6f}")
        lines.append(f"rms_aad = {report.rms_aad:.6f}")
    lines.append("")
    lines.append("# method -> rmsSAD")
    lines.append(f"{method} {report.rms_sad:.6f}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")

    outputs = {"report.json": cubeio.file_digest(out_dir / "report.json"),
               "report.txt": cubeio.file_digest(out_dir / "report.txt")}
    if not args.no_figures:
        figure = plots.plot_signatures(ref_endmembers, est_endmembers, ref_names,
                                       out_dir / "signatures.png", report.permutation)
        outputs["signatures.png"] = cubeio.file_digest(figure)
        if est_abundances is not None and est_header and "rows" in est_header:
            grid = (int(est_header["rows"]), int(est_header["cols"]))
            ordered = np.empty_like(est_abundances)
            ordered[np.asarray(report.permutation, dtype=int)] = est_abundances
            figure = plots.plot_abundance_maps(ordered, grid, ref_names,
                                               out_dir / "abundances.png")
            outputs["abundances.png"] = cubeio.file_digest(figure)

    manifest = {
        "command": "eval",
        "version": __version__,
        "inputs": {
            "estimate_dir": str(est_dir),
            "estimate_digest": cubeio.file_digest(est_dir / "endmembers.csv"),
            "reference": ref_source,
        },
        "outputs": outputs,
    }
    cubeio.write_manifest(out_dir / "manifest.json", manifest)
    log.info("eval: method=%s rms_sad=%.6f%s", method, report.rms_sad,
             "" if report.rms_aad is None else f" rms_aad={report.rms_aad:.6f}")
    return 0


def cmd_sweep(args):
    library, library_ref, base_spec = load_scene_setup(args.spec_file)
    options = load_unmix_options(args.config)
    snr_values = sorted({float(v) for v in args.snr.split(",") if v.strip()})
    if not snr_values:
        raise CliError("--snr must list at least one value")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for method in methods:
        if method not in METHODS:
            raise CliError(f"unknown method {method!r}, expected one of {METHODS}")
    if args.repeats < 1:
        raise CliError("--repeats must be >= 1")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = 0
    for snr in snr_values:
        for method in methods:
            for repeat in range(args.repeats):
                scene_seed = derive_seed(args.master_seed, snr, method, repeat, "scene")
                fit_seed = derive_seed(args.master_seed, snr, method, repeat, "fit")
                row = {"snr_db": snr, "method": method, "repeat": repeat,
                       "rms_sad": float("nan"), "rms_aad": float("nan"),
                       "seconds": float("nan"), "error": ""}
                try:
                    spec = replace(base_spec, snr_db=snr, seed=scene_seed)
                    scene = generate_scene(library, spec)
                    start = time.perf_counter()
                    endmembers, abundances, _, _ = solve_cube(
                        scene.observations, len(scene.names), method, options, seed=fit_seed
                    )
                    row["seconds"] = time.perf_counter() - start
                    report = evaluate(scene.endmembers, endmembers,
                                      scene.abundances, abundances)
                    row["rms_sad"] = report.rms_sad
                    row["rms_aad"] = report.rms_aad
                except Exception as err:  # record the failure, keep sweeping
                    failures += 1
                    row["error"] = f"{type(err).__name__}: {err}"
                    log.warning("sweep cell failed (snr=%s method=%s repeat=%d): %s",
                                snr, method, repeat, err)
                rows.append(row)
                log.info("sweep: snr=%g method=%s repeat=%d rms_sad=%s",
                         snr, method, repeat,
                         "failed" if row["error"] else f"{row['rms_sad']:.6f}")

    with open(out_dir / "sweep.csv", "w", newline="") as handle:
        handle.write("snr_db,method,repeat,rms_sad,rms_aad,seconds,error\n")
        for row in rows:
            handle.write(
                f"{row['snr_db']!r},{row['method']},{row['repeat']},"
                f"{row['rms_sad']!r},{row['rms_aad']!r},{row['seconds']:.3f},"
                f"{row['error']}\n"
            )

    if not args.no_figures:
        plots.plot_sweep_curves(rows, out_dir)

    manifest = {
        "command": "sweep",
        "version": __version__,
        "master_seed": args.master_seed,
        "snr_db": snr_values,
        "methods": methods,
        "repeats": args.repeats,
        "library": {"source": library_ref},
        "spec_file": {"path": str(args.spec_file),
                      "digest": cubeio.file_digest(args.spec_file)},
        "config": None if args.config is None else {
            "path": str(args.config), "digest": cubeio.file_digest(args.config)},
        "solver": _options_payload(options, "per-row", None),
        "failures": failures,
    }
    cubeio.write_manifest(out_dir / "manifest.json", manifest)
    log.info("sweep: %d rows (%d failed) -> %s", len(rows), failures, out_dir)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hsunmix",
        description="Hyperspectral unmixing: synthetic scenes, multilayer "
                    "sparse NMF, VCA baseline, evaluation and SNR sweeps.",
    )
    parser.add_argument("--version", action="version", version=f"hsunmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene")
    p_synth.add_argument("spec_file", help="scene spec file (key = value)")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_unmix = sub.add_parser("unmix", help="unmix an observation cube")
    p_unmix.add_argument("cube", help="cube base path (or its .f64/.json file)")
    p_unmix.add_argument("--endmembers", "-p", type=int, required=True,
                         help="number of endmembers to extract")
    p_unmix.add_argument("--method", choices=METHODS, default="mlnmf")
    p_unmix.add_argument("--config", default=None, help="solver config file")
    p_unmix.add_argument("--out-dir", required=True)
    p_unmix.set_defaults(func=cmd_unmix)

    p_eval = sub.add_parser("eval", help="evaluate an estimate against a reference")
    p_eval.add_argument("est_dir", help="directory written by unmix")
    group = p_eval.add_mutually_exclusive_group(required=True)
    group.add_argument("--truth-dir", default=None, help="directory written by synth")
    group.add_argument("--reference-csv", default=None, help="reference signature CSV")
    p_eval.add_argument("--out-dir", default=None, help="default: the estimate directory")
    p_eval.add_argument("--no-figures", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="scene/method/SNR experiment grid")
    p_sweep.add_argument("spec_file", help="scene spec file; snr_db is overridden per cell")
    p_sweep.add_argument("--snr", required=True, help="comma-separated SNR values in dB")
    p_sweep.add_argument("--methods", default="vca,l12nmf,mlnmf")
    p_sweep.add_argument("--repeats", type=int, default=1)
    p_sweep.add_argument("--master-seed", type=int, default=0)
    p_sweep.add_argument("--config", default=None, help="solver config file")
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    level_name = os.environ.get(VERBOSITY_ENV, "info").lower()
    if level_name not in _LEVELS:
        level_name = "info"
    logging.basicConfig(stream=sys.stderr, level=_LEVELS[level_name],
                        format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:
        log.error("%s", err)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
