import functools
import json
import logging

import click

from .__version__ import __version__
from .core import DEFAULT_ENUMERATION_CAP, DEFAULT_REGION_CAP, SmciError, parse_index_list
from .estimators import EstimatorSpec, run_estimator
from .experiments import ExperimentConfig, Scenario, generate_model, run_inference_experiment, run_learning_experiment
from .formats import dump_csv, dump_model, dump_samples, emit, load_model, load_samples
from .graph import graph_from_spec
from .learning import LearnConfig, exact_mle, learn
from .model import exact_moments
from .sampling import AnnealSchedule, draw_sample_set

logger = logging.getLogger(__name__)


def _load_config(ctx, param, value):
    """Turn a JSON file into the command's default_map so flags still win."""
    if not value:
        return
    try:
        with open(value, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise click.BadParameter(f"invalid JSON: {e}", ctx=ctx, param=param)
    if not isinstance(data, dict):
        raise click.BadParameter("expected a JSON object", ctx=ctx, param=param)
    defaults = {}
    for key, item in data.items():
        if isinstance(item, list):
            item = ",".join(str(v) for v in item)
        defaults[key.replace("-", "_")] = item
    ctx.default_map = {**(ctx.default_map or {}), **defaults}


config_option = click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    is_eager=True,
    expose_value=False,
    callback=_load_config,
    help="JSON file whose keys mirror this command's options",
)


def reports_errors(func):
    """Show library errors as a one-line message and a nonzero exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (SmciError, ValueError, FileNotFoundError) as e:
            raise click.ClickException(str(e))

    return wrapper


def _interval(text):
    try:
        low, high = (float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"Expected an interval 'low,high', got {text!r}")
    return low, high


def _names(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _write(text, out):
    if out:
        emit(text, out)
        click.echo(f"Wrote {out}", err=True)
    else:
        click.echo(text, nl=False)


@click.group()
@click.option("-v", "--verbose", count=True, help="Log INFO with -v, DEBUG with -vv")
@click.version_option(__version__, prog_name="smcibm")
def cli(verbose):
    """Spatial Monte Carlo integration for pairwise Boltzmann machines."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")


@cli.command("gen-model")
@config_option
@click.option("--graph", default="grid:4x5", help="grid:RxC, random:N:P, complete:N, path:N, edgeless:N or a JSON file")
@click.option("--bias-range", default="-0.2,0.2", help="Interval the biases are drawn from")
@click.option("--coupling-range", default="-0.3,0.3", help="Interval the couplings are drawn from")
@click.option("--seed", default=0, type=int, help="Random seed")
@click.option("--out", default=None, help="Model JSON path (stdout when omitted)")
@reports_errors
def gen_model(graph, bias_range, coupling_range, seed, out):
    """Draw a random model on a graph."""
    params = generate_model(graph, _interval(bias_range), _interval(coupling_range), seed)
    _write(dump_model(params), out)


@cli.command()
@config_option
@click.option("--model", required=True, help="Model JSON file")
@click.option("--num", "-m", default=100, type=int, help="Number of sample points M")
@click.option("--seed", default=0, type=int, help="Random seed")
@click.option("--anneal-sweeps", default=1000, type=int, help="Sweeps of the linear beta ramp")
@click.option("--equilibration-sweeps", default=100, type=int, help="Sweeps at beta=1 after the ramp")
@click.option("--out", default=None, help="Sample file path (stdout when omitted)")
@reports_errors
def sample(model, num, seed, anneal_sweeps, equilibration_sweeps, out):
    """Draw M independent annealed Gibbs samples from a model."""
    params = load_model(model)
    schedule = AnnealSchedule.linear(anneal_sweeps, equilibration_sweeps)
    samples = draw_sample_set(params, num, schedule, seed)
    _write(dump_samples(samples, seed), out)


@cli.command()
@config_option
@click.option("--model", required=True, help="Model JSON file")
@click.option("--samples", default=None, help="Sample file (not needed for --method exact)")
@click.option("--method", default="smci1", help="mci, smci<k>, smci-s2, gsmci or exact")
@click.option("--target", "targets", multiple=True, required=True, help="Vertex 'i' or vertices 'i,j'; repeatable")
@click.option("--region", default=None, help="Explicit sum region 'i,j,...' (gsmci, smci-s2)")
@click.option("--cap", default=DEFAULT_REGION_CAP, type=int, help="Largest sum region enumerated explicitly")
@click.option("--out", default=None, help="CSV path (stdout when omitted)")
@reports_errors
def estimate(model, samples, method, targets, region, cap, out):
    """Estimate spin-product expectations with a chosen estimator."""
    params = load_model(model)
    s = load_samples(samples) if samples else None
    if s is not None and s.n != params.n:
        raise ValueError(f"Samples have {s.n} spins but the model has {params.n} vertices")
    sum_region = params.graph.region(parse_index_list(region)) if region else None
    rows = []
    for text in targets:
        target = params.graph.region(parse_index_list(text))
        spec = EstimatorSpec.parse(method, target, sum_region)
        result = run_estimator(params, spec, s, cap)
        rows.append((" ".join(str(v) for v in target), spec.label, result.sample_count, result.value))
    _write(dump_csv(("target", "method", "M", "estimate"), rows), out)


@cli.command()
@config_option
@click.option("--model", required=True, help="Model JSON file")
@click.option("--cap", default=DEFAULT_ENUMERATION_CAP, type=int, help="Largest model enumerated")
@click.option("--covariance", is_flag=True, help="Report edge covariances instead of pair moments")
@click.option("--out", default=None, help="CSV path (stdout when omitted)")
@reports_errors
def exact(model, cap, covariance, out):
    """Exact means and edge moments by enumerating every state."""
    params = load_model(model)
    moments = exact_moments(params, cap)
    logger.info("log Z = %.12f", moments.log_z)
    pairs = moments.covariances(params.graph) if covariance else moments.pairs
    rows = [(i, "", m) for i, m in enumerate(moments.means)]
    rows.extend((i, j, v) for (i, j), v in zip(params.graph.edges, pairs))
    _write(dump_csv(("i", "j", "value"), rows), out)


@cli.command("learn")
@config_option
@click.option("--graph", required=True, help="Learner graph spec or JSON file")
@click.option("--data", required=True, help="Training sample file")
@click.option("--method", default="pcd-smci1", help="fixed-<estimator>, pcd-<estimator> or exact")
@click.option("--e", "e", default=1, type=int, help="Data-extension rate of the persistent chains")
@click.option("--kappa", default=1, type=int, help="Gibbs sweeps between parameter updates")
@click.option("--lr", default=0.02, type=float, help="Learning rate")
@click.option("--steps", default=5000, type=int, help="Parameter updates")
@click.option("--seed", default=0, type=int, help="Random seed of the persistent chains")
@click.option("--ref", default="exact", help="'exact' for the exact MLE or a model JSON to compare against")
@click.option("--record-every", default=1, type=int, help="Trace row interval in steps")
@click.option("--region-cap", default=DEFAULT_REGION_CAP, type=int, help="Largest sum region enumerated")
@click.option("--trace", default=None, help="Trace CSV path (stdout when omitted)")
@click.option("--out-model", default=None, help="Write the learned model here")
@reports_errors
def learn_command(graph, data, method, e, kappa, lr, steps, seed, ref, record_every, region_cap, trace, out_model):
    """Learn a model from data and trace the coupling MAE against a reference."""
    d = load_samples(data)
    learner = graph_from_spec(graph, seed)
    if learner.n != d.n:
        raise ValueError(f"Data have {d.n} spins but the learner graph has {learner.n} vertices")
    if ref == "exact":
        reference = exact_mle(learner, d)
    else:
        reference = load_model(ref)
        if reference.graph != learner:
            raise ValueError("The reference model must be defined on the learner graph")
    cfg = LearnConfig.parse(
        method,
        e=e,
        kappa=kappa,
        learning_rate=lr,
        steps=steps,
        seed=seed,
        record_every=record_every,
        region_cap=region_cap,
    )
    result = learn(learner, d, cfg, reference)
    _write(dump_csv(("step", "mae", "grad_norm"), ((r.step, r.mae, r.grad_norm) for r in result.rows)), trace)
    if out_model:
        emit(dump_model(result.final), out_model)
    click.echo(f"{result.label}: final MAE {result.final_mae:.6f}", err=True)


@cli.group()
def experiment():
    """Batch experiments over many random models."""


def _report(table, out, summary):
    if out:
        click.echo(f"Wrote {out}", err=True)
    else:
        click.echo(table.to_csv(), nl=False)
    if summary:
        emit(json.dumps(table.summary(), indent=2) + "\n", summary)
    for row in table.aggregate():
        click.echo(f"{row.method:>20} {table.x_label}={row.x:<6} MAE {row.mean:.5f} ± {row.stderr:.5f} (n={row.count})", err=True)
    for note in table.notes():
        click.echo(f"note: {note}", err=True)


def _given(**options):
    return {name: value for name, value in options.items() if value is not None}


@experiment.command()
@config_option
@click.option("--graph", default=None, help="Graph spec, a fresh random graph per trial for random:N:P")
@click.option("--trials", default=None, type=int, help="Number of random models [200]")
@click.option("--sizes", default=None, help="Sample sizes M, e.g. '10,100,1000'")
@click.option("--methods", default=None, help="Subset of 'mci,smci1,smci-s2,smci2,ais'")
@click.option("--bias-range", default=None, help="Interval of the biases [-0.2,0.2]")
@click.option("--coupling-range", default=None, help="Interval of the couplings [-0.3,0.3]")
@click.option("--seed", default=None, type=int, help="Master seed [0]")
@click.option("--anneal-sweeps", default=None, type=int, help="Sweeps of the linear beta ramp [1000]")
@click.option("--equilibration-sweeps", default=None, type=int, help="Sweeps at beta=1 after the ramp [100]")
@click.option("--ais-chains", default=None, type=int, help="Pin the AIS chain count [one run per M with M chains]")
@click.option("--ais-step", default=None, type=float, help="AIS inverse-temperature step [1e-4]")
@click.option("--region-cap", default=None, type=int, help="Largest sum region enumerated [20]")
@click.option("--jobs", default=None, type=int, help="Worker processes [1]")
@click.option("--out", default=None, help="Raw rows CSV (stdout when omitted)")
@click.option("--summary", default=None, help="JSON file of the aggregates")
@click.option("--progress", is_flag=True, help="Show a progress bar over trials")
@reports_errors
def inference(graph, trials, sizes, methods, bias_range, coupling_range, seed, anneal_sweeps,
              equilibration_sweeps, ais_chains, ais_step, region_cap, jobs, out, summary, progress):
    """Covariance MAE of each estimator against the exact covariances."""
    cfg = ExperimentConfig(
        scenario=Scenario.INFERENCE,
        output=out,
        **_given(
            graph=graph,
            trials=trials,
            sample_sizes=parse_index_list(sizes) if sizes else None,
            methods=_names(methods) if methods else None,
            bias_range=_interval(bias_range) if bias_range else None,
            coupling_range=_interval(coupling_range) if coupling_range else None,
            seed=seed,
            anneal_sweeps=anneal_sweeps,
            equilibration_sweeps=equilibration_sweeps,
            ais_chains=ais_chains,
            ais_step=ais_step,
            region_cap=region_cap,
            jobs=jobs,
        ),
    )
    _report(run_inference_experiment(cfg, progress), out, summary)


@experiment.command()
@config_option
@click.option("--scenario", type=click.Choice(["matched", "mismatched"]), default="matched", help="Generator graph setting")
@click.option("--graph", default=None, help="Learner graph spec [grid:4x5]")
@click.option("--generator-graph", default=None, help="Generator graph spec (complete graph when mismatched)")
@click.option("--trials", default=50, type=int, help="Number of random models")
@click.option("--data-size", default=None, type=int, help="Training points N [50]")
@click.option("--methods", default=None, help="Learning methods, e.g. 'fixed-smci1,pcd-smci1'")
@click.option("--e-values", default=None, help="Data-extension rates of the PCD runs, e.g. '1,2,4'")
@click.option("--steps", default=None, type=int, help="Parameter updates per run [5000]")
@click.option("--lr", default=None, type=float, help="Learning rate [0.02]")
@click.option("--kappa", default=None, type=int, help="Gibbs sweeps between updates [1]")
@click.option("--record-every", default=None, type=int, help="Trace interval in steps [50]")
@click.option("--seed", default=None, type=int, help="Master seed [0]")
@click.option("--jobs", default=None, type=int, help="Worker processes [1]")
@click.option("--out", default=None, help="Raw rows CSV (stdout when omitted)")
@click.option("--summary", default=None, help="JSON file of the aggregates")
@click.option("--progress", is_flag=True, help="Show a progress bar over trials")
@reports_errors
def learning(scenario, graph, generator_graph, trials, data_size, methods, e_values, steps, lr, kappa,
             record_every, seed, jobs, out, summary, progress):
    """Coupling MAE of the learning loops against the exact MLE, step by step."""
    cfg = ExperimentConfig(
        scenario=Scenario(scenario),
        output=out,
        **_given(
            graph=graph,
            generator_graph=generator_graph,
            trials=trials,
            data_size=data_size,
            methods=_names(methods) if methods else None,
            e_values=parse_index_list(e_values) if e_values else None,
            steps=steps,
            learning_rate=lr,
            kappa=kappa,
            record_every=record_every,
            seed=seed,
            jobs=jobs,
        ),
    )
    _report(run_learning_experiment(cfg, progress), out, summary)


def main():
    cli()
