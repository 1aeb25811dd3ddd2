"""Experiment manifests, end-to-end runs and the kdlab command line."""

from cli.manifest import ExperimentManifest, TaskSettings, load_manifest, parse_manifest
from cli.run import run_experiment
from cli.analyze import size_table

__all__ = [
    "ExperimentManifest",
    "TaskSettings",
    "load_manifest",
    "parse_manifest",
    "run_experiment",
    "size_table",
]
