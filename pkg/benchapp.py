#!/usr/bin/env python3
"""
BackdoorBench - Temporal-Logic Backdoors for Neural Motion Planners
Main CLI Interface
"""

import functools
import json
import os
import sys

import click
from rich.console import Console
from rich.table import Table

from backdoorbench import __version__, utils
from backdoorbench.pipeline import ExperimentRunner

console = Console()
err_console = Console(stderr=True)

DEFAULT_CONFIG = "config.yaml"


def _fail(command: str, error: Exception):
    """Human-readable line plus machine-readable JSON on stderr, exit 1"""
    err_console.print(f"[red]✗ {command} failed: {error}[/red]")
    payload = {'error': type(error).__name__, 'message': str(error), 'command': command}
    sys.stderr.write(json.dumps(payload) + '\n')
    sys.exit(1)


def run_command(name: str):
    """Wrap a subcommand: runner from context, top-level error handling, manifest"""

    def decorator(fn):
        @functools.wraps(fn)
        @click.pass_context
        def wrapper(ctx, *args, **kwargs):
            config = ctx.obj['config']
            try:
                runner = ExperimentRunner(config)
                result = fn(ctx, runner, *args, **kwargs)
                out_dir = runner.exp.path('reports')
                utils.write_manifest(config, name, out_dir,
                                     {'result': result} if isinstance(result, dict) else None)
                return result
            except Exception as e:  # noqa: BLE001
                ctx.obj['logger'].error(f"{name}: {type(e).__name__}: {e}")
                _fail(name, e)
        return wrapper

    return decorator


def _show(title: str, data: dict):
    table = Table(title=title)
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="green")
    for key, value in data.items():
        if isinstance(value, float):
            value = f"{value:.4f}"
        elif isinstance(value, dict):
            value = json.dumps(value, sort_keys=True, default=str)
        table.add_row(str(key), str(value))
    console.print(table)


@click.group()
@click.option('--config', '-c', default=DEFAULT_CONFIG, help='Config file path (YAML or JSON)')
@click.pass_context
def cli(ctx, config):
    """BackdoorBench - Temporal-Logic Backdoors for Neural Motion Planners"""
    ctx.ensure_object(dict)

    if not os.path.exists(config):
        err_console.print(f"[red]Error: Config file not found: {config}[/red]")
        sys.stderr.write(json.dumps({'error': 'FileNotFoundError', 'message': config,
                                     'command': ctx.invoked_subcommand}) + '\n')
        sys.exit(1)
    ctx.obj['config'] = utils.load_config(config)
    ctx.obj['logger'] = utils.setup_logging(ctx.obj['config'])
    performance = ctx.obj['config'].get('performance', {})
    utils.seed_everything(int(ctx.obj['config'].get('project', {}).get('seed', 0)),
                          bool(performance.get('deterministic', True)))


@cli.command('synth-maps')
@click.option('--n-maps', '-n', type=int, default=None, help='Number of maps (default: dataset.n_maps)')
@run_command('synth-maps')
def synth_maps(ctx, runner, n_maps):
    """Synthesize random obstacle maps"""
    with console.status("[bold green]Synthesizing maps..."):
        paths = runner.synth_maps(n_maps)
    console.print(f"[green]✓ {len(paths)} maps written to {runner.exp.path('maps')}[/green]")
    return {'n_maps': len(paths)}


@cli.command('gen-demos')
@run_command('gen-demos')
def gen_demos(ctx, runner):
    """Generate PRM demonstrations and the train/test split"""
    with console.status("[bold green]Planning demonstrations..."):
        path = runner.gen_demos()
    console.print(f"[green]✓ Dataset written to {path}[/green]")
    return {'dataset': path}


@cli.command('train-benign')
@click.option('--planner', '-p', type=click.Choice(['sampler', 'guidance']), default=None)
@run_command('train-benign')
def train_benign(ctx, runner, planner):
    """Train a benign planner on the demonstrations"""
    with console.status("[bold green]Training..."):
        result = runner.train_benign(planner)
    _show("Benign Training", result)
    return result


@cli.group()
def attack():
    """Inject a backdoor (ds, pis) or sweep lambda"""


@attack.command('ds')
@click.option('--shape', '-s', default=None, help='Trigger shape override')
@run_command('attack ds')
def attack_ds(ctx, runner, shape):
    """Differentiable-semantics injection"""
    with console.status("[bold green]Injecting backdoor (DS)..."):
        result = runner.attack('ds', shape)
    _show("DS Injection", result)
    return result


@attack.command('pis')
@click.option('--shape', '-s', default=None, help='Trigger shape override')
@run_command('attack pis')
def attack_pis(ctx, runner, shape):
    """Solve-and-poison injection"""
    with console.status("[bold green]Poisoning and training (PIS)..."):
        result = runner.attack('pis', shape)
    _show("PIS Injection", result)
    return result


@attack.command('lambda-sweep')
@click.option('--lambdas', '-l', default='0.1,1,10,100', help='Comma-separated lambda values')
@run_command('attack lambda-sweep')
def attack_lambda_sweep(ctx, runner, lambdas):
    """DS injection for several lambdas"""
    values = [float(v) for v in lambdas.split(',') if v.strip()]
    with console.status("[bold green]Sweeping lambda..."):
        result = runner.lambda_sweep(values)
    _show("Lambda Sweep", result)
    return result


@cli.command('eval')
@click.option('--shapes', default=None, help='Comma-separated trigger shapes to evaluate')
@click.option('--mode', type=click.Choice(['ds', 'pis']), default=None)
@run_command('eval')
def evaluate(ctx, runner, shapes, mode):
    """Evaluate benign and backdoored planners on the test split"""
    shape_list = [s.strip() for s in shapes.split(',')] if shapes else None
    with console.status("[bold green]Evaluating..."):
        result = runner.evaluate(shape_list, mode)

    _show("Benign Planner (test split)", result['benign'])
    if result['rows']:
        table = Table(title="Backdoor Metrics")
        for col in ('trigger_shape', 'trigger_rate', 'path_len_incr', 'explore_incr'):
            table.add_column(col, style="cyan" if col == 'trigger_shape' else "green")
        for row in result['rows']:
            table.add_row(row['trigger_shape'], *(
                '-' if row[k] is None else f"{row[k]:.2f}" for k in ('trigger_rate', 'path_len_incr', 'explore_incr')
            ))
        console.print(table)
    return {k: v for k, v in result.items() if k != 'rows'}


@cli.group()
def defend():
    """Defenses: finetune, invert, reconstruct"""


@defend.command('finetune')
@click.option('--epochs', '-e', type=int, default=None)
@run_command('defend finetune')
def defend_finetune(ctx, runner, epochs):
    """Fine-tune the backdoored model on clean data"""
    with console.status("[bold green]Fine-tuning..."):
        result = runner.defend_finetune(epochs)
    _show("Fine-tune Deltas", result['deltas'])
    return result


@defend.command('invert')
@click.option('--spec', 'spec_text', default=None, help='Suspected formula (concrete syntax)')
@click.option('--benign', 'benign_model', is_flag=True, help='Run on the benign model (false-positive control)')
@click.option('--n-tasks', type=int, default=8)
@run_command('defend invert')
def defend_invert(ctx, runner, spec_text, benign_model, n_tasks):
    """Trigger inversion"""
    spec = {'text': spec_text} if spec_text else None
    with console.status("[bold green]Inverting trigger..."):
        result = runner.defend_invert(spec, benign_model, n_tasks)
    _show("Trigger Inversion", result)
    return result


@defend.command('reconstruct')
@click.option('--identity', is_flag=True, help='Train clean -> clean only (sanity mode)')
@run_command('defend reconstruct')
def defend_reconstruct(ctx, runner, identity):
    """Input-reconstruction preprocessing"""
    with console.status("[bold green]Training autoencoder and re-evaluating..."):
        result = runner.defend_reconstruct(identity)
    _show("Reconstruction Defense", {k: v for k, v in result.items() if not isinstance(v, dict)})
    return result


@cli.command()
@click.option('--index', '-i', type=int, default=0, help='Test task index')
@click.option('--mode', type=click.Choice(['ds', 'pis']), default=None)
@run_command('render')
def render(ctx, runner, index, mode):
    """Render benign and backdoored paths with and without the trigger"""
    paths = runner.render(index, mode)
    for path in paths:
        console.print(f"[green]✓ {path}[/green]")
    return {'renders': paths}


@cli.command()
@run_command('status')
def status(ctx, runner):
    """Show configuration and artifact status"""
    result = runner.status()
    console.print("[bold]BackdoorBench Status[/bold]\n")
    _show("Experiment", {k: v for k, v in result.items() if k != 'artifacts'})
    _show("Artifacts", result['artifacts'])
    return result


@cli.command()
def info():
    """Show information about BackdoorBench"""

    console.print(f"[bold cyan]BackdoorBench {__version__}[/bold cyan]\n")

    console.print("Backdoor attacks and defenses for neural motion planners,")
    console.print("with backdoor behaviors written in signal temporal logic.\n")

    console.print("[bold]Quick Start:[/bold]")
    console.print("  1. backdoorbench synth-maps")
    console.print("  2. backdoorbench gen-demos")
    console.print("  3. backdoorbench train-benign")
    console.print("  4. backdoorbench attack ds")
    console.print("  5. backdoorbench eval")
    console.print("  6. backdoorbench defend invert\n")

    console.print("For full documentation, see README.md")


def main():
    """Main entry point"""
    cli(obj={})


if __name__ == "__main__":
    main()
