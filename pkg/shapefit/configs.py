from pathlib import Path
import os

from shapefit.fitter import SwarmConfig
from shapefit.synth import MIN_TARGET_VOXELS, SynthConfig


results_dir = 'shapefit_results'
init_file = 'shapefit.yaml'
res_path = Path(os.getcwd()) / results_dir
init_file_path = Path(os.getcwd()) / init_file

configs = {
    "results_dir": results_dir,
    "results_path": res_path,
    "init_file_path": init_file_path,

    "files": {
        "model": "model.json",
        "fitted_surface": "fitted.ply",
        "fit_result": "fit_result.json",
        "surface": "surface.ply",
        "mask": "mask.mhd",
        "evaluation": "evaluation.json",
        "evaluation_table": "evaluation.txt",
        "templates_dir": "templates",
        "template": "template_{:03d}.ply",
        "targets_dir": "targets",
        "target": "target_{:03d}.mhd",
        "target_params": "target_{:03d}.json",
        "synth_manifest": "manifest.json",
        "benchmark": "benchmark.json",
        "run_manifest": "run_manifest.json",
    },

    "model": {
        "variance_fraction": 0.98,
        # mm; larger spreads suggest the templates are not co-registered
        "centroid_spread_warning": 5.0,
    },
    "evaluation": {
        "percentile": None,
    },
    "swarm": SwarmConfig().to_dict(),
    "synth": SynthConfig().to_dict(),
    "min_target_voxels": MIN_TARGET_VOXELS,

    "benchmark": {
        "functions": ["sphere", "rosenbrock"],
        "sphere": {"dims": 5, "bounds": [-5.12, 5.12], "max_iterations": 200},
        "rosenbrock": {"dims": 2, "bounds": [-2.048, 2.048], "max_iterations": 400},
    },
}

# sections a config file may set
config_sections = ("swarm", "synth", "model", "evaluation")
