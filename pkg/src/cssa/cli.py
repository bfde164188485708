"""Command-line front end.

Subcommands cover dictionary training, diagnostic encoding, the two
fusion pipelines, standalone metric evaluation, and the structure
comparison sweep. Reports are CSV with LF line endings and "." as the
decimal separator; an infinite PSNR is written as the literal string
inf. Failures exit nonzero with a single-line diagnostic prefixed by
the failure class (io error / shape error / config error).
"""

import csv
import functools
import io as stdio
import sys

import click
import numpy as np

from . import metrics as metmod
from .cdl import CdlOptions, TrainingBatch, learn
from .fusion import FusionConfig, fuse_multifocus, fuse_nir_vl, luma
from .io import DictFormatError, load_dict, load_image, save_dict, save_image
from .solver import (Regularizer, SolverOptions, encode, reconstruct,
                     sparsity_ratio, support_overlap)

STRUCTURES = ("l1", "l21", "linf1", "l1l21")
DEFAULT_LAMBDA_GRID = "0.001,0.01,0.05,0.1,0.5"
DEFAULT_GAMMA_GRID = "0.001:0.001,0.001:0.01,0.01:0.01,0.001:0.1,0.01:0.1"
REPORT_COLUMNS = ("structure", "lambda", "gamma1", "gamma2", "sparsity",
                  "common_support_pct", "approx_error", "iterations")
METRIC_COLUMNS = ("en", "psnr", "ssim", "sf", "ei")


class ConfigError(Exception):
    """Raised for inconsistent or unparseable command configuration."""


def _guard(fn):
    """Convert failures into one-line diagnostics and a nonzero exit."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (OSError, DictFormatError) as exc:
            _die("io error", exc)
        except ConfigError as exc:
            _die("config error", exc)
        except ValueError as exc:
            _die("shape error", exc)

    return wrapper


def _die(kind, exc):
    click.echo(f"{kind}: {exc}", err=True)
    sys.exit(1)


def _build_reg(structure, lam, gamma1, gamma2):
    """Regularizer for a structure name plus the weight triple echoed
    in reports (inactive weights as 0)."""
    if structure == "l1l21":
        return Regularizer.l1_l21(gamma1, gamma2), (0.0, gamma1, gamma2)
    if structure == "l1":
        return Regularizer.l1(lam), (lam, 0.0, 0.0)
    if structure == "l21":
        return Regularizer.l21(lam), (lam, 0.0, 0.0)
    if structure == "linf1":
        return Regularizer.linf1(lam), (lam, 0.0, 0.0)
    raise ConfigError(f"unknown structure {structure!r}")


def _solver_opts(rho, max_iter, tol):
    try:
        return SolverOptions(rho=rho, max_iter=max_iter,
                             tol_primal=tol, tol_dual=tol)
    except ValueError as exc:
        raise ConfigError(exc) from None


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _metric_row(fused, input_planes):
    rep = metmod.report(luma(fused), input_planes)
    return [str(rep[c]) for c in METRIC_COLUMNS]


def _load_planes(paths):
    return [luma(load_image(p)) for p in paths]


def _parse_floats(text, flag):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {flag} value {text!r}") from None
    if not values:
        raise ConfigError(f"empty {flag} grid")
    return values


def _parse_pairs(text, flag):
    pairs = []
    for chunk in text.split(","):
        if not chunk.strip():
            continue
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"cannot parse {flag} entry {chunk!r}")
        try:
            pairs.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"cannot parse {flag} entry {chunk!r}") from None
    if not pairs:
        raise ConfigError(f"empty {flag} grid")
    return pairs


_structure_option = click.option(
    "--structure", type=click.Choice(STRUCTURES), default="l1l21",
    show_default=True, help="Sparsity structure of the encode.")


def _weight_options(fn):
    for opt in (
        click.option("--lambda", "lam", type=float, default=0.01,
                     show_default=True,
                     help="Weight for the single-weight structures."),
        click.option("--gamma1", type=float, default=0.001,
                     show_default=True, help="Elementwise weight (l1l21)."),
        click.option("--gamma2", type=float, default=0.01,
                     show_default=True, help="Group weight (l1l21)."),
    ):
        fn = opt(fn)
    return fn


def _admm_options(fn):
    for opt in (
        click.option("--rho", type=float, default=10.0, show_default=True,
                     help="ADMM penalty."),
        click.option("--max-iter", type=int, default=200, show_default=True),
        click.option("--tol", type=float, default=1e-4, show_default=True,
                     help="Primal and dual stopping tolerance."),
    ):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Joint sparse coding, dictionary learning, and image fusion."""


@main.command("learn")
@click.argument("images", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output dictionary file.")
@click.option("--modalities", type=int, default=1, show_default=True,
              help="Modalities per sample set; IMAGES are listed "
                   "sample-major (all modalities of set 1, then set 2, ...).")
@click.option("--filters", type=int, default=32, show_default=True)
@click.option("--filter-size", type=int, default=8, show_default=True)
@click.option("--outer-iters", type=int, default=20, show_default=True)
@_structure_option
@_weight_options
@_admm_options
@click.option("--dict-rho", type=float, default=1.0, show_default=True,
              help="ADMM penalty of the filter update.")
@click.option("--lowpass-reg", type=float, default=5.0, show_default=True)
@click.option("--no-highpass", is_flag=True,
              help="Train on the raw planes instead of highpass components.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--history", type=click.Path(dir_okay=False), default=None,
              help="Write the per-alternation objective trace as CSV.")
@_guard
def cmd_learn(images, out, modalities, filters, filter_size, outer_iters,
              structure, lam, gamma1, gamma2, rho, max_iter, tol, dict_rho,
              lowpass_reg, no_highpass, seed, history):
    """Train dictionaries on IMAGES and write them to --out."""
    if modalities < 1:
        raise ConfigError("--modalities must be at least 1")
    if len(images) % modalities:
        raise ConfigError(
            f"{len(images)} images do not split into sets of {modalities}"
        )
    planes = _load_planes(images)
    reg, _ = _build_reg(structure, lam, gamma1, gamma2)
    try:
        opts = CdlOptions(
            num_filters=filters, filter_size=filter_size,
            outer_iters=outer_iters, sparse_reg=reg,
            sparse_opts=_solver_opts(rho, max_iter, tol),
            dict_rho=dict_rho, highpass=not no_highpass,
            lowpass_reg=lowpass_reg, seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(exc) from None
    t_sets = len(images) // modalities
    batch = TrainingBatch(
        np.stack(planes).reshape(t_sets, modalities, *planes[0].shape)
    )
    result = learn(batch, opts)
    save_dict(result.dictionaries, out)
    if history:
        _write_csv(history, ("alternation", "objective"),
                   [(i + 1, str(v)) for i, v in enumerate(result.objectives)])
    click.echo(f"{out}: {modalities} x {filters} filters of size "
               f"{filter_size}, final objective {result.objectives[-1]:.6f}")


@main.command("encode")
@click.argument("images", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--dict", "dict_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Statistics CSV.")
@_structure_option
@_weight_options
@_admm_options
@click.option("--zero-tol", type=float, default=None,
              help="Absolute support threshold "
                   "(default: 1e-8 times the largest magnitude).")
@click.option("--recon", type=str, default=None,
              help="Prefix for per-modality reconstruction PNGs.")
@_guard
def cmd_encode(images, dict_path, out, structure, lam, gamma1, gamma2, rho,
               max_iter, tol, zero_tol, recon):
    """Jointly encode IMAGES (one per modality) and report statistics."""
    planes = _load_planes(images)
    dicts = load_dict(dict_path)
    reg, weights = _build_reg(structure, lam, gamma1, gamma2)
    X, diag = encode(planes, dicts, reg, _solver_opts(rho, max_iter, tol))
    sparsity = diag.sparsity_ratio
    common = diag.common_support_pct
    if zero_tol is not None:
        sparsity = sparsity_ratio(X, zero_tol)
        common = (support_overlap(X, zero_tol) if len(planes) > 1
                  else (100.0 if sparsity > 0 else 0.0))
    _write_csv(out, REPORT_COLUMNS, [
        (structure, *map(str, weights), str(sparsity), str(common),
         str(diag.approx_error), diag.iterations)
    ])
    if recon is not None:
        planes_hat = np.clip(reconstruct(X, dicts), 0.0, 1.0)
        for i in range(planes_hat.shape[0]):
            save_image(planes_hat[i], f"{recon}{i}.png")
    click.echo(f"{out}: sparsity {sparsity:.6f}, common support "
               f"{common:.2f}%, approx error {diag.approx_error:.6f}, "
               f"{diag.iterations} iterations")


@main.command("fuse-nirvl")
@click.argument("vl_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("nir_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dict", "dict_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Two-modality dictionary file in (VL, NIR) order.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--gamma1", type=float, default=0.001, show_default=True)
@click.option("--gamma2", type=float, default=0.01, show_default=True)
@_admm_options
@click.option("--lowpass-reg", type=float, default=5.0, show_default=True)
@click.option("--metrics-out", type=click.Path(dir_okay=False), default=None,
              help="Metrics CSV (default: OUT + .metrics.csv).")
@_guard
def cmd_fuse_nirvl(vl_path, nir_path, dict_path, out, gamma1, gamma2, rho,
                   max_iter, tol, lowpass_reg, metrics_out):
    """Fuse a color VL image with a grayscale NIR image."""
    vl = load_image(vl_path)
    if vl.ndim == 2:
        vl = np.stack([vl] * 3, axis=-1)
    nir = luma(load_image(nir_path))
    dicts = load_dict(dict_path)
    try:
        cfg = FusionConfig(Regularizer.l1_l21(gamma1, gamma2),
                           _solver_opts(rho, max_iter, tol),
                           lowpass_reg=lowpass_reg)
    except ValueError as exc:
        raise ConfigError(exc) from None
    fused = fuse_nir_vl(vl, nir, dicts, cfg)
    save_image(fused, out)
    _write_csv(metrics_out or f"{out}.metrics.csv", METRIC_COLUMNS,
               [_metric_row(fused, [luma(vl), nir])])
    click.echo(f"wrote {out}")


@main.command("fuse-mf")
@click.argument("images", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--dict", "dict_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Single-dictionary file shared by all inputs.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--lambda", "lam", type=float, default=0.01, show_default=True)
@_admm_options
@click.option("--lowpass-reg", type=float, default=5.0, show_default=True)
@click.option("--metrics-out", type=click.Path(dir_okay=False), default=None,
              help="Metrics CSV (default: OUT + .metrics.csv).")
@_guard
def cmd_fuse_mf(images, dict_path, out, lam, rho, max_iter, tol, lowpass_reg,
                metrics_out):
    """Fuse two or more differently focused views of one scene."""
    if len(images) < 2:
        raise ConfigError("need at least 2 input images")
    inputs = [load_image(p) for p in images]
    dicts = load_dict(dict_path)
    try:
        cfg = FusionConfig(Regularizer.l21(lam),
                           _solver_opts(rho, max_iter, tol),
                           lowpass_reg=lowpass_reg)
    except ValueError as exc:
        raise ConfigError(exc) from None
    fused = fuse_multifocus(inputs, dicts, cfg)
    save_image(fused, out)
    _write_csv(metrics_out or f"{out}.metrics.csv", METRIC_COLUMNS,
               [_metric_row(fused, [luma(p) for p in inputs])])
    click.echo(f"wrote {out}")


@main.command("metrics")
@click.argument("fused_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("inputs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Metrics CSV (default: stdout).")
@_guard
def cmd_metrics(fused_path, inputs, out):
    """Evaluate a fused image against its inputs."""
    fused = load_image(fused_path)
    row = _metric_row(fused, _load_planes(inputs))
    if out:
        _write_csv(out, METRIC_COLUMNS, [row])
    else:
        buf = stdio.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        writer.writerow(row)
        click.echo(buf.getvalue(), nl=False)


@main.command("report-table1")
@click.argument("image_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("image_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--dict", "dict_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--structures", default="l1,l21,l1l21", show_default=True,
              help="Comma-separated structure names to sweep.")
@click.option("--lambda-grid", default=DEFAULT_LAMBDA_GRID, show_default=True,
              help="Comma-separated weights for the single-weight "
                   "structures.")
@click.option("--gamma-grid", default=DEFAULT_GAMMA_GRID, show_default=True,
              help="Comma-separated gamma1:gamma2 pairs for l1l21.")
@_admm_options
@click.option("--lowpass-reg", type=float, default=5.0, show_default=True)
@click.option("--zero-tol", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Accepted for config uniformity; the sweep is "
                   "deterministic.")
@_guard
def cmd_report_table1(image_a, image_b, dict_path, out, structures,
                      lambda_grid, gamma_grid, rho, max_iter, tol,
                      lowpass_reg, zero_tol, seed):
    """Sweep sparsity structures and weights over one image pair.

    Both images are reduced to luma, split into low and high bands,
    and the high bands are jointly encoded for every (structure,
    weight) cell. Each CSV row reports the sparsity ratio, the common
    support percentage, the residual power, and the iteration count.
    """
    from .fusion import lowpass_decompose

    names = [s.strip() for s in structures.split(",") if s.strip()]
    if not names:
        raise ConfigError("empty --structures list")
    for name in names:
        if name not in STRUCTURES:
            raise ConfigError(f"unknown structure {name!r}")
    lambdas = _parse_floats(lambda_grid, "--lambda-grid")
    pairs = _parse_pairs(gamma_grid, "--gamma-grid")
    if lowpass_reg <= 0:
        raise ConfigError("--lowpass-reg must be positive")

    planes = _load_planes([image_a, image_b])
    highs = [lowpass_decompose(p, lowpass_reg).high for p in planes]
    dicts = load_dict(dict_path)
    opts = _solver_opts(rho, max_iter, tol)

    rows = []
    for name in names:
        cells = pairs if name == "l1l21" else [(lam,) for lam in lambdas]
        for cell in cells:
            if name == "l1l21":
                reg, weights = _build_reg(name, 0.0, *cell)
            else:
                reg, weights = _build_reg(name, cell[0], 0.0, 0.0)
            X, diag = encode(highs, dicts, reg, opts)
            sparsity = diag.sparsity_ratio
            common = diag.common_support_pct
            if zero_tol is not None:
                sparsity = sparsity_ratio(X, zero_tol)
                common = support_overlap(X, zero_tol)
            rows.append((name, *map(str, weights), str(sparsity),
                         str(common), str(diag.approx_error),
                         diag.iterations))
    _write_csv(out, REPORT_COLUMNS, rows)
    click.echo(f"{out}: {len(rows)} rows")


if __name__ == "__main__":
    main()
