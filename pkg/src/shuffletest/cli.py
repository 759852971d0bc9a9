"""Command-line interface.

Every command that writes files also writes ``<primary output>.manifest.json``
recording the resolved parameters and the sha256 of each output; ``rerun``
re-executes a manifest and verifies the outputs are byte-identical.

Exit codes: 0 success, 2 validation/usage error, 3 runtime or diagnostic
failure.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from importlib.resources import files as _resource_files

import click
import jsonschema
import numpy as np

from . import __version__
from .exceptions import ShuffleTestError, ValidationError
from .expfam import parse_prior
from .inference import (bayes_factor_from_chains, chi_square_test,
                        gamma_poisson_bf_curve, simulation_p_value,
                        statistic_histogram, uniformity_bayes_factor)
from .normalizer import build_table
from .permutations import (DataSummary, ShuffleScheme, get_statistic,
                           read_histogram_csv, read_perm_file, sample_dataset,
                           write_perm_file)
from .samplers import ChainConfig, replicate_exchange_chains

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

SEED_ENVVAR = "SHUFFLETEST_SEED"


def _schema(name: str) -> dict:
    path = _resource_files("shuffletest") / "schemas" / f"{name}.schema.json"
    return json.loads(path.read_text(encoding="utf-8"))


def validate_document(doc: dict, schema_name: str) -> None:
    try:
        jsonschema.validate(doc, _schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise ValidationError(
            f"output does not match the {schema_name} schema: {exc.message}"
        ) from None


def _write_json(path: str, doc: dict) -> None:
    # deterministic bytes: sorted keys, fixed indentation, no timestamps
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(command: str, params: dict, outputs: dict) -> str:
    primary = params.get("out") or sorted(outputs)[0]
    doc = {
        "version": 1,
        "kind": "run_manifest",
        "command": command,
        "parameters": params,
        "package_version": __version__,
        "outputs": {path: _sha256(path) for path in sorted(outputs)},
    }
    validate_document(doc, "manifest")
    manifest_path = f"{primary}.manifest.json"
    _write_json(manifest_path, doc)
    return manifest_path


def _execute(command: str, params: dict, runner) -> None:
    try:
        outputs = runner(params)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (ShuffleTestError, NotImplementedError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    if outputs:
        manifest = _write_manifest(command, params, outputs)
        click.echo(f"manifest: {manifest}")


def _load_input(path: str):
    """Read either a .perm dataset or a value,count histogram CSV.

    Returns ("perms", X, meta) or ("hist", values, counts).
    """
    lower = str(path).lower()
    if lower.endswith(".perm"):
        X, meta = read_perm_file(path)
        return "perms", X, meta
    if lower.endswith(".csv"):
        values, counts = read_histogram_csv(path)
        return "hist", values, counts
    # sniff: histogram rows contain a comma
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "," in line:
                values, counts = read_histogram_csv(path)
                return "hist", values, counts
            break
    X, meta = read_perm_file(path)
    return "perms", X, meta


def _parse_range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValidationError(f"expected LO:HI, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ValidationError(f"expected LO:HI numbers, got {text!r}") from None
    return lo, hi


def _parse_alpha_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) == 3:
            lo, hi, step = (float(p) for p in parts)
            if step <= 0 or hi < lo:
                raise ValueError
            return np.arange(lo, hi + step / 2.0, step)
    except ValueError:
        pass
    raise ValidationError(
        f"bad alpha grid {text!r}; expected LO:HI:STEP or a single value")


@click.group()
@click.version_option(version=__version__, prog_name="shuffletest")
def main():
    """Uniformity testing for card shuffles and other mixing schemes."""


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def _run_simulate(p: dict) -> dict:
    scheme = ShuffleScheme(p["scheme"], p["n"], p["k"], p["seed"])
    X = sample_dataset(scheme, p["samples"], seed=p["seed"])
    write_perm_file(p["out"], X, scheme, seed=p["seed"])
    return {p["out"]: None}


@main.command("simulate")
@click.option("--n", type=int, required=True, help="Deck size.")
@click.option("--k", type=int, required=True,
              help="Shuffle steps per sample (random transpositions).")
@click.option("--samples", type=int, required=True, help="Number of draws N.")
@click.option("--scheme", default="random_transpositions", show_default=True,
              type=click.Choice(["random_transpositions", "uniform"]))
@click.option("--seed", type=int, default=0, show_default=True,
              envvar=SEED_ENVVAR)
@click.option("--out", required=True, type=click.Path(), help="Output .perm file.")
def cmd_simulate(**kw):
    """Draw permutations from a shuffle scheme into a .perm file."""
    _execute("simulate", dict(kw), _run_simulate)


# --------------------------------------------------------------------------
# freq-test
# --------------------------------------------------------------------------

def _run_freq_test(p: dict) -> dict:
    kind, a, b = _load_input(p["in_path"])
    if kind == "perms":
        stat = get_statistic(p["statistic"], a.shape[1])
        values, counts = statistic_histogram(a, stat)
    else:
        values, counts = a, b
        if values[0] != 0 or np.any(np.diff(values) != 1):
            # fill gaps so categories are consecutive from zero
            full = np.arange(0, values.max() + 1)
            dense = np.zeros(full.size, dtype=np.int64)
            dense[values] = counts
            values, counts = full, dense
    report = chi_square_test(counts, p["model"],
                             lump_threshold=p["lump"], values=values)
    doc = report.to_json()
    if p["simulation_p"]:
        doc["simulation_p_value"] = simulation_p_value(
            counts, p["model"], lump_threshold=p["lump"],
            n_sims=p["sims"], seed=p["seed"])
    validate_document(doc, "chi_square_report")
    click.echo(f"chi-square {report.statistic:.4f} on {report.df} df, "
               f"p = {report.p_value:.4f}")
    if p["simulation_p"]:
        click.echo(f"simulation p = {doc['simulation_p_value']:.4f} "
                   f"({p['sims']} draws)")
    outputs = {}
    if p["out"]:
        _write_json(p["out"], doc)
        outputs[p["out"]] = None
    if p["plot_out"]:
        lines = ["category,observed,expected"]
        lines += [f"{c},{o},{repr(e)}" for c, o, e in
                  zip(report.categories, report.observed, report.expected)]
        with open(p["plot_out"], "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        outputs[p["plot_out"]] = None
    return outputs


@main.command("freq-test")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Input .perm file or value,count histogram CSV.")
@click.option("--statistic", default="fixed-points", show_default=True)
@click.option("--model", default="poisson:1", show_default=True,
              help="Expected model: poisson:LAMBDA or uniform[:SIZE].")
@click.option("--lump", type=float, default=1.0, show_default=True,
              help="Merge tail categories with expected count below this.")
@click.option("--simulation-p", is_flag=True,
              help="Also compute a Monte Carlo p-value.")
@click.option("--sims", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              envvar=SEED_ENVVAR)
@click.option("--out", type=click.Path(), default=None,
              help="Write the JSON report here.")
@click.option("--plot-out", type=click.Path(), default=None,
              help="Write observed-vs-expected CSV here.")
def cmd_freq_test(**kw):
    """Chi-square goodness-of-fit test against a uniform-shuffle model."""
    _execute("freq-test", dict(kw), _run_freq_test)


# --------------------------------------------------------------------------
# bayes-test
# --------------------------------------------------------------------------

def _run_bayes_test(p: dict) -> dict:
    kind, a, b = _load_input(p["in_path"])
    if kind == "perms":
        n = a.shape[1]
        stat = get_statistic(p["statistic"], n)
        data = a
    else:
        if not p["n"]:
            raise ValidationError("histogram input requires --n (deck size)")
        n = p["n"]
        stat = get_statistic(p["statistic"], n)
        data = DataSummary.from_histogram(a, b)
    prior = parse_prior(p["prior"], stat)
    config = ChainConfig(steps=p["steps"], burnin=p["burnin"],
                         proposal_scale=p["proposal_scale"], seed=p["seed"],
                         thin=p["thin"])
    run_config = {
        "steps": config.steps, "burnin": config.burnin, "thin": config.thin,
        "proposal_scale": config.proposal_scale, "seed": config.seed,
        "n_chains": p["chains"], "prior": prior.describe(),
        "statistic": stat.name, "n": stat.n, "prior_odds": p["prior_odds"],
    }
    outputs = {}
    if p["chain_dump"]:
        chains = replicate_exchange_chains(data, stat, prior, config,
                                           p["chains"])
        for i, chain in enumerate(chains):
            path = f"{p['chain_dump']}chain{i:02d}.csv"
            chain.to_csv(path)
            outputs[path] = None
        report = bayes_factor_from_chains(chains, data, stat, prior,
                                          prior_odds=p["prior_odds"],
                                          config=run_config)
    else:
        report = uniformity_bayes_factor(data, stat, prior, config,
                                         n_chains=p["chains"],
                                         prior_odds=p["prior_odds"])
    doc = report.to_json()
    validate_document(doc, "bayes_factor_report")
    bf_text = "+inf" if math.isinf(report.bf) else f"{report.bf:.6g}"
    click.echo(f"BF(H0:uniform / H1) = {bf_text}   "
               f"log BF = {report.log_bf:.4f}   "
               f"P(H0|Data) = {report.posterior_null:.6g}")
    for w in report.warnings:
        click.echo(f"warning: {w}", err=True)
    if p["out"]:
        _write_json(p["out"], doc)
        outputs[p["out"]] = None
    if p["per_chain_out"]:
        lines = ["chain,seed,log_bf,bf"]
        for i, (seed, lbf, bf) in enumerate(zip(report.seeds,
                                                report.per_chain_log_bf,
                                                report.per_chain_bf)):
            bf_cell = "+inf" if math.isinf(bf) else repr(bf)
            lines.append(f"{i},{seed},{repr(lbf)},{bf_cell}")
        with open(p["per_chain_out"], "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        outputs[p["per_chain_out"]] = None
    return outputs


@main.command("bayes-test")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Input .perm file or value,count histogram CSV.")
@click.option("--statistic", default="fixed-points", show_default=True)
@click.option("--prior", default="normal:0,0.1", show_default=True,
              help="normal:MU,SIGMA2 | conjugate:N0,X0 | gamma:ALPHA,BETA")
@click.option("--chains", type=int, default=20, show_default=True)
@click.option("--steps", type=int, default=1000, show_default=True)
@click.option("--burnin", type=int, default=200, show_default=True)
@click.option("--thin", type=int, default=1, show_default=True)
@click.option("--proposal-scale", type=float, default=0.2, show_default=True)
@click.option("--prior-odds", type=float, default=1.0, show_default=True)
@click.option("--n", type=int, default=None,
              help="Deck size (required for histogram input).")
@click.option("--seed", type=int, default=0, show_default=True,
              envvar=SEED_ENVVAR)
@click.option("--out", type=click.Path(), default=None,
              help="Write the JSON report here.")
@click.option("--per-chain-out", type=click.Path(), default=None,
              help="Write per-chain Bayes factors CSV here.")
@click.option("--chain-dump", type=str, default=None,
              help="Prefix for per-chain state dumps (CSV).")
def cmd_bayes_test(**kw):
    """Bayes-factor test of uniformity via the exchange algorithm."""
    _execute("bayes-test", dict(kw), _run_bayes_test)


# --------------------------------------------------------------------------
# conjugate-curve
# --------------------------------------------------------------------------

def _run_conjugate_curve(p: dict) -> dict:
    kind, a, b = _load_input(p["in_path"])
    if kind == "perms":
        stat = get_statistic(p["statistic"], a.shape[1])
        values, counts = statistic_histogram(a, stat)
    else:
        values, counts = a, b
    points = np.repeat(values.astype(np.int64), counts)
    grid = _parse_alpha_grid(p["alpha_grid"])
    curve = gamma_poisson_bf_curve(points, grid)
    lines = ["alpha_or_k,bf,log_bf"]
    for alpha, bf in curve:
        if math.isinf(bf):
            lines.append(f"{repr(alpha)},+inf,+inf")
        else:
            lines.append(f"{repr(alpha)},{repr(bf)},{repr(math.log(bf))}")
    with open(p["out"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    click.echo(f"wrote {len(curve)} grid points to {p['out']}")
    return {p["out"]: None}


@main.command("conjugate-curve")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Input .perm file or value,count histogram CSV.")
@click.option("--statistic", default="fixed-points", show_default=True)
@click.option("--alpha-grid", default="0.5:10:0.5", show_default=True,
              help="LO:HI:STEP grid of Gamma(alpha,alpha) shapes.")
@click.option("--out", required=True, type=click.Path(),
              help="Output CSV (alpha_or_k,bf,log_bf).")
def cmd_conjugate_curve(**kw):
    """Closed-form Gamma-Poisson Bayes factors over an alpha grid."""
    _execute("conjugate-curve", dict(kw), _run_conjugate_curve)


# --------------------------------------------------------------------------
# normalizer
# --------------------------------------------------------------------------

def _run_normalizer(p: dict) -> dict:
    method = {"thermo": "thermodynamic"}.get(p["method"], p["method"])
    table = build_table(p["statistic"].replace("-", "_"), p["n"],
                        theta_range=_parse_range(p["theta_range"]),
                        resolution=p["resolution"], method=method,
                        seed=p["seed"], M=p["samples"],
                        thermo_grid_points=p["grid_points"])
    doc = table.to_json()
    validate_document(doc, "normalizer_table")
    _write_json(p["out"], doc)
    click.echo(f"{method} table: {len(doc['grid'])} grid points over "
               f"[{doc['grid'][0]['theta']:g}, {doc['grid'][-1]['theta']:g}]")
    return {p["out"]: None}


@main.command("normalizer")
@click.option("--statistic", default="fixed-points", show_default=True)
@click.option("--n", type=int, required=True, help="Deck size.")
@click.option("--method", default="exact", show_default=True,
              type=click.Choice(["exact", "importance", "thermo"]))
@click.option("--theta-range", default="-3:3", show_default=True)
@click.option("--resolution", type=int, default=61, show_default=True)
@click.option("--samples", type=int, default=100_000, show_default=True,
              help="Importance samples per grid point.")
@click.option("--grid-points", type=int, default=21, show_default=True,
              help="Quadrature nodes for the thermodynamic route.")
@click.option("--seed", type=int, default=0, show_default=True,
              envvar=SEED_ENVVAR)
@click.option("--out", required=True, type=click.Path(),
              help="Output JSON table.")
def cmd_normalizer(**kw):
    """Build and persist a log-normalizer table."""
    _execute("normalizer", dict(kw), _run_normalizer)


# --------------------------------------------------------------------------
# rerun
# --------------------------------------------------------------------------

_RUNNERS = {
    "simulate": _run_simulate,
    "freq-test": _run_freq_test,
    "bayes-test": _run_bayes_test,
    "conjugate-curve": _run_conjugate_curve,
    "normalizer": _run_normalizer,
}


@main.command("rerun")
@click.argument("manifest", type=click.Path(exists=True))
def cmd_rerun(manifest):
    """Re-execute a recorded run and verify byte-identical outputs."""
    try:
        with open(manifest, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        validate_document(doc, "manifest")
        command = doc["command"]
        if command not in _RUNNERS:
            raise ValidationError(f"manifest names unknown command {command!r}")
        _RUNNERS[command](doc["parameters"])
        mismatches = []
        for path, expected in doc["outputs"].items():
            actual = _sha256(path)
            if actual != expected:
                mismatches.append(f"{path}: {actual} != {expected}")
        if mismatches:
            click.echo("error: outputs differ from the manifest:", err=True)
            for line in mismatches:
                click.echo(f"  {line}", err=True)
            sys.exit(EXIT_RUNTIME)
        click.echo(f"reproduced {len(doc['outputs'])} output(s) byte-identically")
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (ShuffleTestError, NotImplementedError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
