"""Pipeline plumbing in one import: config loading, the command functions and ``main``.

Typical use from Python::

    from duffing_blowup import harness
    cfg = harness.load(overrides=["schedule.I_0=1e5"], output_dir="runs/small")
    harness.run("construct", cfg)

The command line (``duffing-blowup``) goes through the same functions.
"""
import os
import time

from .cli import (COMMANDS, _write_manifest, build_parser, cmd_build_chart, cmd_construct,
                  cmd_stability, cmd_sweep, cmd_verify, main)
from .config import (ChartSpec, OUTPUT_ENV, PotentialSpec, RunConfig, StabilitySpec, VerifySpec,
                     from_dict, load)
from .errors import DuffingError

__all__ = ["COMMANDS", "ChartSpec", "OUTPUT_ENV", "PotentialSpec", "RunConfig", "StabilitySpec",
           "VerifySpec", "build_parser", "cmd_build_chart", "cmd_construct", "cmd_stability",
           "cmd_sweep", "cmd_verify", "from_dict", "load", "main", "run"]


def run(command, cfg, **options):
    """Run one subcommand on an already loaded config and return its exit code.

    ``options`` fill the command's extra flags (``log_dir``, ``I_0``, ``profile``,
    ``constant``, ``sigmas``); unspecified ones default to None.  Errors are
    mapped to exit codes exactly as on the command line.
    """
    if command not in COMMANDS:
        raise KeyError(f"unknown command {command!r}; choose from {sorted(COMMANDS)}")
    args = build_parser().parse_args([command])
    for k in ("log_dir", "I_0", "profile", "constant", "sigmas"):
        setattr(args, k, options.get(k))
    started = time.time()
    outs = []
    try:
        model = cfg.validate()
        os.makedirs(cfg.output_dir, exist_ok=True)
        status, outs = COMMANDS[command](cfg, model, args)
    except DuffingError as exc:
        status = exc.exit_code
    if os.path.isdir(cfg.output_dir):
        _write_manifest(cfg, command, started, outs, status)
    return status
