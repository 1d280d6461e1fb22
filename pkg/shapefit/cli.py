"""Console script for shapefit."""
import argparse
import logging
import sys

from shapefit import ShapeFit, __version__
from shapefit.exceptions import (DegenerateGeometryError, EmptyMaskError, GridMismatchError, SelfIntersectionError,
                                 TopologyError, UsageError)

logger = logging.getLogger(__name__)

# exit codes
EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2

COMPUTATION_ERRORS = (EmptyMaskError, TopologyError, DegenerateGeometryError, SelfIntersectionError,
                      GridMismatchError)


class CLI(object):
    """CLI describes a command line interface for interacting with shapefit, there
    are several different functions that can be performed.

    """

    available_args = {
        # inputs
        "t": "templates",
        "m": "model",
        "tg": "target",
        "s": "surface",
        "mk": "mask",
        "ref": "reference",

        # options
        "c": "config",
        "g": "grid",
        "o": "out",
        "seed": "seed",
        "w": "workers",
        "vf": "variance_fraction",
        "p": "percentile",
        "v": "verbose",
    }
    commands = ("init", "help", "info", "version") + ShapeFit.available_commands
    switches = ("verbose",)
    multi_value_args = ("templates",)
    converters = {
        "seed": int,
        "workers": int,
        "variance_fraction": float,
        "percentile": float,
    }

    def __init__(self, argv=None):
        self.parser = argparse.ArgumentParser(
            prog='shapefit',
            description='shapefit CLI Runner',
            usage=r'''
     _                      __ _ _
 ___| |__   __ _ _ __   ___ / _(_) |_
/ __| '_ \ / _` | '_ \ / _ \ |_| | __|
\__ \ | | | (_| | |_) |  __/  _| | |_
|___/_| |_|\__,_| .__/ \___|_| |_|\__|
                |_|


shapefit <command> [<args>]

- Available commands:
   init              write a config file with the default parameters
   synth             generate corresponded synthetic templates and target masks
   build-model       build a shape model from corresponded template surfaces
   fit               fit a shape model to a target mask with the hybrid particle swarm
   mesh              extract the marching cubes surface of a mask
   voxelize          rasterize a closed surface onto a voxel grid
   evaluate          compare surfaces with reference masks (DSC, Hausdorff distance, smoothness)
   benchmark         run the particle swarm on the sphere and rosenbrock test functions
   help              get help about how to use shapefit
   info              get info & metadata about shapefit
   version           get the version of shapefit installed on your machine

- Available arguments:

    -t          Template PLY files or a directory of them    (you can use --templates instead)
    -m          Path to a shape model JSON                   (you can use --model instead)
    -tg         Path to a target mask (.mhd/.mha)            (you can use --target instead)
    -s          Path to a surface PLY, or a directory of them for evaluate    (--surface)
    -mk         Path to a mask (.mhd/.mha)                   (you can use --mask instead)
    -ref        Reference mask, or a directory of them for evaluate           (--reference)

    -c          Path to a YAML or JSON config file           (you can use --config instead)
    -g          Voxel grid as dims/spacing/origin, e.g. 64,64,64/1,1,1/0,0,0    (--grid)
    -o          Output directory, ./shapefit_results by default                (--out)
    -seed       Seed for every random draw                   (you can use --seed instead)
    -w          Number of fitness evaluation threads         (you can use --workers instead)
    -vf         Fraction of the shape variance the model keeps, 0.98 by default    (--variance-fraction)
    -p          Use this percentile of the Hausdorff distances instead of the maximum    (--percentile)
    -v          Debug logging                                (you can use --verbose instead)

Settings are resolved as built-in defaults < config file < command line arguments.

---------------------------------------------------------------------------------------------------------------

- HowTo:

    - example for a full synthetic round trip:

        shapefit synth -o data
        shapefit build-model -t data/templates -o model
        shapefit fit -m model/model.json -tg data/targets/target_000.mhd -o fit --seed 7
        shapefit evaluate -s fit/fitted.ply -ref data/targets/target_000.mhd -o eval

    - the marching cubes baseline of the same target:

        shapefit mesh -mk data/targets/target_000.mhd -o baseline

    - batch evaluation pairs every surface NAME.ply with the reference NAME.mhd:

        shapefit evaluate -s surfaces/ -ref masks/ -o eval

Exit codes: 0 success, 1 computation failure (e.g. an empty mask), 2 usage or I/O error.

                    ''')

        self.parser.add_argument('command', help='Subcommand to run')
        argv = sys.argv[1:] if argv is None else list(argv)
        self.cmd = self.parse_command(argv[:1])
        self.args = argv[1:]
        self.dict_args = self.convert_args_to_dict()
        if self.dict_args.get('verbose'):
            logging.getLogger('shapefit').setLevel(logging.DEBUG)
        getattr(self, self.cmd.command)()

    def _arg_name(self, token: str):
        if not token.startswith('-'):
            return None
        name = token.lstrip('-').replace('-', '_')
        if name in self.available_args.values():
            return name
        return self.available_args.get(name)

    def convert_args_to_dict(self) -> dict:
        """
        convert args list to a dictionary, translating short args to their long names
        @return: args as dictionary
        """
        dict_args = {}
        i = 0
        while i < len(self.args):
            token = self.args[i]
            name = self._arg_name(token)
            if name is None:
                raise UsageError(f"Unrecognized argument -> {token}")
            values = []
            i += 1
            while i < len(self.args) and self._arg_name(self.args[i]) is None:
                values.append(self.args[i])
                i += 1
            dict_args[name] = self._convert(name, values)
        dict_args['cmd'] = self.cmd.command
        return dict_args

    def _convert(self, name, values):
        if name in self.switches:
            if values:
                raise UsageError(f"--{name} takes no value")
            return True
        if not values:
            raise UsageError(f"--{name.replace('_', '-')} needs a value")
        if name in self.multi_value_args:
            return [token for value in values for token in value.split()]
        if len(values) > 1:
            raise UsageError(f"--{name.replace('_', '-')} takes one value, got {values}")
        try:
            return self.converters.get(name, str)(values[0])
        except ValueError:
            raise UsageError(f"invalid value {values[0]!r} for --{name.replace('_', '-')}")

    def parse_command(self, argv):
        """
        parse command, which represents the function that will be called by shapefit
        @return: command entered by the user
        """
        cmd = self.parser.parse_args(argv)
        cmd.command = cmd.command.replace('-', '_')
        if cmd.command not in self.commands:
            self.parser.print_help()
            raise UsageError(f"Unrecognized command {cmd.command}")
        # use dispatch pattern to invoke method with same name
        return cmd

    def help(self, *args, **kwargs):
        self.parser.print_help()

    def init(self, *args, **kwargs):
        """
        write the default configuration to shapefit.yaml, or to the --out path if one is given
        usage:
            shapefit init [-o path]
        """
        ShapeFit.create_init_file(self.dict_args.get('out'))

    def _run(self):
        ShapeFit(**self.dict_args)

    build_model = fit = mesh = voxelize = evaluate = synth = benchmark = _run

    def version(self):
        print(f"shapefit version: {__version__}")

    def info(self):
        print(f"""
            package name:           shapefit
            version:                {__version__}
            description:            statistical shape model fitting to binary segmentations
                                    with a hybrid particle swarm and Dice loss
            dependencies:           numpy, scipy, scikit-image, scikit-learn, pandas, pyyaml
            requires python:        >= 3.9
            license:                MIT
            written in:             100% python
            operating system:       independent
        """)


def main(argv=None) -> int:
    try:
        CLI(argv)
    except COMPUTATION_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_COMPUTATION
    except (UsageError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
