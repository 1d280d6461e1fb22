"""Main module."""
import logging
import time
from pathlib import Path

import numpy as np
import pandas as pd

from shapefit import __version__
from shapefit.configs import configs, config_sections
from shapefit.exceptions import UsageError
from shapefit.fitter import SwarmConfig, benchmark_functions, fit, minimize
from shapefit.mesh import load_mesh, marching_cubes, save_mesh, topology_report
from shapefit.metrics import evaluate, report_table
from shapefit.shape_model import build_model, instantiate, load_model, save_model, template_centroid_spread
from shapefit.synth import SynthConfig, make_targets, make_templates
from shapefit.utils import create_yaml, parse_grid, resolve_config, tableize, write_json
from shapefit.volume import load_volume, save_volume, voxelize

logging.basicConfig(format='%(levelname)s - %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)

VOLUME_SUFFIXES = ('.mhd', '.mha')
BENCHMARK_SEEDS = 10


class ShapeFit(object):
    """
    ShapeFit runs one pipeline stage per command and writes its outputs and a run manifest
    into the output directory
    """

    available_commands = ('build_model', 'fit', 'mesh', 'voxelize', 'evaluate', 'synth', 'benchmark')
    files = configs.get('files')

    def __init__(self, **cli_args):
        logger.info(f"Entered CLI args: {cli_args}")
        self.command = cli_args.get('cmd', None)
        if not self.command or self.command not in self.available_commands:
            raise UsageError(f"You must enter a valid command.\n"
                             f"available commands: {self.available_commands}")
        logger.info(f"Executing command: {self.command} ...")
        self.args = cli_args
        self.seed = cli_args.get('seed')
        self.results_path = Path(cli_args.get('out') or configs.get('results_path'))
        self.config = resolve_config(cli_args.get('config'), self._flag_overrides())
        logger.info(f"your chosen configuration: {self.config}")
        self.inputs = {}
        self.outputs = {}

        start = time.perf_counter()
        self._create_results_dir()
        getattr(self, self.command)()
        self._write_run_manifest(time.perf_counter() - start)

    def _flag_overrides(self) -> dict:
        overrides = {section: {} for section in config_sections}
        if self.seed is not None:
            overrides['swarm']['seed'] = self.seed
            overrides['synth']['seed'] = self.seed
        if self.args.get('workers') is not None:
            overrides['swarm']['workers'] = self.args['workers']
        if self.args.get('variance_fraction') is not None:
            overrides['model']['variance_fraction'] = self.args['variance_fraction']
        if self.args.get('percentile') is not None:
            overrides['evaluation']['percentile'] = self.args['percentile']
        return overrides

    def _require(self, key: str):
        value = self.args.get(key)
        if not value:
            raise UsageError(f"the {self.command} command needs --{key.replace('_', '-')}")
        return value

    def _create_results_dir(self):
        if self.results_path.exists():
            logger.info(f"Folder {self.results_path} already exists, outputs in it will be overwritten")
        self.results_path.mkdir(parents=True, exist_ok=True)

    def _output(self, name: str, *parts) -> Path:
        path = self.results_path.joinpath(*parts)
        self.outputs.setdefault(name, []).append(str(path))
        return path

    def _write_run_manifest(self, duration: float):
        seeds = {'fit': 'swarm', 'benchmark': 'swarm', 'synth': 'synth'}
        section = seeds.get(self.command)
        manifest = {
            "command": self.command.replace('_', '-'),
            "version": __version__,
            "seed": self.config[section]['seed'] if section else self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_seconds": duration,
        }
        path = self.results_path / self.files['run_manifest']
        write_json(manifest, path)
        logger.info(f"run manifest saved to {path}")

    def _template_paths(self):
        tokens = self._require('templates')
        tokens = tokens if isinstance(tokens, (list, tuple)) else str(tokens).split()
        paths = []
        for token in tokens:
            token = Path(token)
            paths += sorted(token.glob('*.ply')) if token.is_dir() else [token]
        return paths

    def build_model(self):
        paths = self._template_paths()
        if len(paths) < 2:
            raise UsageError(f"building a shape model needs at least 2 templates, got {len(paths)}")
        self.inputs['templates'] = [str(p) for p in paths]
        templates = [load_mesh(p) for p in paths]
        spread = template_centroid_spread(templates)
        if spread > self.config['model']['centroid_spread_warning']:
            logger.warning(f"template centroids spread over {spread:.2f} mm, the templates may not be co-registered")
        model = build_model(templates, self.config['model']['variance_fraction'])
        path = self._output('model', self.files['model'])
        save_model(model, path)
        logger.info(f"shape model with {model.t} modes saved to {path}")

    def fit(self):
        model_path, target_path = Path(self._require('model')), Path(self._require('target'))
        self.inputs.update(model=str(model_path), target=str(target_path))
        model = load_model(model_path)
        target = load_volume(target_path)
        result = fit(model, target, SwarmConfig.from_dict(self.config['swarm']))

        surface_path = self._output('fitted_surface', self.files['fitted_surface'])
        save_mesh(instantiate(model, result.params), surface_path)
        result_path = self._output('fit_result', self.files['fit_result'])
        write_json(result.to_dict(), result_path)
        logger.info(f"fitted surface saved to {surface_path}, fit result to {result_path}")

    def mesh(self):
        mask_path = Path(self._require('mask'))
        self.inputs['mask'] = str(mask_path)
        surface = marching_cubes(load_volume(mask_path))
        if not surface.n_faces:
            logger.warning(f"mask {mask_path} is empty, writing an empty surface")
        else:
            logger.info(f"marching cubes surface: {topology_report(surface).to_dict()}")
        path = self._output('surface', self.files['surface'])
        save_mesh(surface, path)
        logger.info(f"surface saved to {path}")

    def voxelize(self):
        surface_path = Path(self._require('surface'))
        self.inputs['surface'] = str(surface_path)
        if self.args.get('grid'):
            grid = parse_grid(self.args['grid'])
        elif self.args.get('reference'):
            self.inputs['reference'] = str(self.args['reference'])
            grid = load_volume(self.args['reference']).grid
        else:
            raise UsageError("the voxelize command needs --grid or --reference")
        mask = voxelize(load_mesh(surface_path), grid)
        path = self._output('mask', self.files['mask'])
        save_volume(mask, path)
        logger.info(f"mask with {mask.count} foreground voxels saved to {path}")

    def _evaluation_cases(self):
        surface, reference = Path(self._require('surface')), Path(self._require('reference'))
        if not surface.is_dir():
            return [(surface, reference)]
        cases = []
        for surface_path in sorted(surface.glob('*.ply')):
            if not reference.is_dir():
                cases.append((surface_path, reference))
                continue
            matches = [reference / (surface_path.stem + suffix) for suffix in VOLUME_SUFFIXES]
            matches = [m for m in matches if m.exists()]
            if not matches:
                raise UsageError(f"no reference mask named {surface_path.stem}.mhd or .mha in {reference}")
            cases.append((surface_path, matches[0]))
        if not cases:
            raise UsageError(f"no .ply surfaces found in {surface}")
        return cases

    def evaluate(self):
        cases = self._evaluation_cases()
        self.inputs['cases'] = [{"surface": str(s), "reference": str(r)} for s, r in cases]
        grid = parse_grid(self.args['grid']) if self.args.get('grid') else None
        percentile = self.config['evaluation']['percentile']
        reports = [evaluate(load_mesh(s), load_volume(r), grid=grid, surface_id=s.stem, reference_id=r.stem,
                            percentile=percentile)
                   for s, r in cases]

        json_path = self._output('evaluation', self.files['evaluation'])
        write_json({"cases": [r.to_dict() for r in reports]}, json_path)
        table = tableize(report_table(reports))
        table_path = self._output('evaluation_table', self.files['evaluation_table'])
        with open(table_path, 'w', encoding='utf-8') as f:
            f.write(table)
        print(table)
        logger.info(f"evaluation saved to {json_path} and {table_path}")

    def synth(self):
        synth_config = SynthConfig.from_dict(self.config['synth'])
        templates = make_templates(synth_config)
        templates_dir = self.results_path / self.files['templates_dir']
        templates_dir.mkdir(exist_ok=True)
        names = []
        for index, mesh in enumerate(templates):
            name = self.files['template'].format(index)
            save_mesh(mesh, self._output('templates', self.files['templates_dir'], name))
            names.append(name)
        write_json({"config": synth_config.to_dict(), "n_vertices": templates[0].n_vertices, "templates": names},
                   self._output('templates_manifest', self.files['templates_dir'], self.files['synth_manifest']))

        model = build_model(templates, self.config['model']['variance_fraction'])
        save_model(model, self._output('model', self.files['model']))
        targets_dir = self.results_path / self.files['targets_dir']
        targets_dir.mkdir(exist_ok=True)
        for index, (mask, params) in enumerate(make_targets(model, synth_config)):
            save_volume(mask, self._output('targets', self.files['targets_dir'], self.files['target'].format(index)))
            write_json({"params": params.to_dict(), "grid": mask.grid.to_dict(), "foreground_voxels": mask.count},
                       self._output('target_params', self.files['targets_dir'],
                                    self.files['target_params'].format(index)))
        logger.info(f"{len(templates)} templates and {synth_config.target_count} targets saved to "
                    f"{self.results_path}")

    def benchmark(self):
        swarm = self.config['swarm']
        results = {}
        rows = []
        for name in configs['benchmark']['functions']:
            props = configs['benchmark'][name]
            f = benchmark_functions[name]
            runs = []
            for offset in range(BENCHMARK_SEEDS):
                config = SwarmConfig.from_dict(dict(swarm, seed=swarm['seed'] + offset,
                                                    max_iterations=props['max_iterations'], stall_iterations=0))
                dims = props['dims']
                low, high = props['bounds']
                result = minimize(f, np.full(dims, low), np.full(dims, high), config, label=name)
                runs.append({"seed": config.seed, "fitness": result.fitness, "position": result.position.tolist(),
                             "success": bool(result.fitness < 1e-2) if name != 'sphere'
                             else bool(np.linalg.norm(result.position) < 1e-2)})
            successes = sum(run['success'] for run in runs)
            results[name] = {"dims": props['dims'], "max_iterations": props['max_iterations'],
                             "successes": successes, "runs": runs}
            rows.append({"function": name, "dims": props['dims'], "successes": f"{successes}/{len(runs)}",
                         "best fitness": f"{min(run['fitness'] for run in runs):.3e}"})
        path = self._output('benchmark', self.files['benchmark'])
        write_json(results, path)
        print(tableize(pd.DataFrame(rows)))
        logger.info(f"benchmark results saved to {path}")

    @staticmethod
    def create_init_file(path=None):
        """write the built-in default config sections to a YAML file"""
        path = Path(path) if path else configs.get('init_file_path')
        if path.exists():
            logger.warning(f"{path} already exists and will be overwritten")
        defaults = resolve_config()
        logger.info(f"initializing a default config file in {path}")
        if create_yaml(defaults, path):
            logger.info(f"a default config is created for you in {path}. "
                        f"Change it to your needs and pass it with --config")
        else:
            logger.warning("something went wrong while initializing a default file")
        return path
