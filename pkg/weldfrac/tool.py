"""Command-line interface: ``python -m weldfrac.tool`` or ``weldfrac``."""
import argparse
import json
import logging
import os
import sys

from . import config as cfg
from .bundle import BundleError, load_bundle, save_bundle, summarize
from .fem import ElementGeometry
from .metallurgy import generate_cct, generate_ttt
from .output import (
    RunManifest,
    export_curves,
    pressurization_fields,
    weld_fields,
    write_crack_path,
    write_vtk,
)
from .scenarios import (
    run_defect_sweep,
    run_dilatometry,
    run_pressurization,
    run_ssy_jr,
    run_weld,
)
from .types import (
    ConfigError,
    MaterialError,
    MeshError,
    MetallurgyError,
    RunStatistics,
    ScenarioError,
    SolverError,
)

logger = logging.getLogger("weldfrac.tool")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SCENARIO = 4


class Run:
    "Output directory, normalized configuration and manifest of one command."

    def __init__(self, command, options):
        config = cfg.load_config(options.config, strict=not options.lenient)
        overrides = {"run.threads": options.threads, "run.seed": options.seed,
                     "weld.dt_max": options.dt_max}  # fmt: skip
        for path, value in overrides.items():
            if value is not None:
                config = config.replace(path, value)

        self.config = config
        self.hash = cfg.config_hash(config)
        self.out_dir = options.out_dir
        os.makedirs(self.out_dir, exist_ok=True)
        self.manifest = RunManifest(command, self.hash, config["scenario"])
        path = self.path("run_config.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write(cfg.dump_config(config) + "\n")
        self.manifest.register(path)
        logger.info("%s: configuration %s, output in %s", command, self.hash[:12], self.out_dir)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    @property
    def output(self):
        return self.config["output"]

    def curves(self, record, name):
        if self.output["csv"]:
            path = self.path(name)
            export_curves(record, path)
            self.manifest.register(path)

    def vtk(self, mesh, fields, name, weights=None):
        if self.output["vtk"]:
            path = self.path(name)
            write_vtk(mesh, fields, path, weights, title=f"{self.config['scenario']} {name}")
            self.manifest.register(path)

    def finish(self, statistics=None):
        self.manifest.statistics = statistics or {}
        path = self.manifest.write(self.out_dir)
        logger.info("wrote %s", path)


def command_ttt(run, options):
    config = run.config
    comp = cfg.build_composition(config)
    kinetics = cfg.build_kinetics(config)
    section = config["ttt"]
    diagram = generate_ttt(comp, kinetics.temps, comp.G_init, section["levels"],
                           section["points"])  # fmt: skip
    run.curves(diagram, "ttt.csv")
    run.finish()


def command_cct(run, options):
    config = run.config
    comp = cfg.build_composition(config)
    kinetics = cfg.build_kinetics(config)
    diagram = generate_cct(comp, kinetics.temps, kinetics, config["cct"]["rates"],
                           T_end=config["cct"]["T_end"])  # fmt: skip
    for entry in diagram.runs:
        logger.info("%g °C/s: CR700 %.4g °C/h, %s", entry.rate, entry.cr700, entry.final)
    run.curves(diagram, "cct.csv")
    run.finish()


def command_dilatometry(run, options):
    config = run.config
    section = config["dilatometry"]
    curve = run_dilatometry(
        cfg.build_composition(config), cfg.build_kinetics(config), cfg.build_material_db(config),
        section["schedule"], T_start=section["T_start"], initial=config["material"]["initial"],
        dT=section["dT"],
    )  # fmt: skip
    run.curves(curve, "dilatometry.csv")
    run.finish()


def command_weld(run, options):
    config = run.config
    db = cfg.build_material_db(config)
    mesh = cfg.build_mesh(config)
    passes, settings = cfg.build_weld(config, db)
    result = run_weld(mesh, passes, settings, RunStatistics())
    geometry = ElementGeometry(result.mesh)
    run.vtk(result.mesh, weld_fields(result), "weld.vtk", geometry.weights)
    if run.output["bundle"]:
        path = run.path("stage1.cbor")
        save_bundle(result, path, run.hash)
        run.manifest.register(path)
    run.finish(result.statistics)


def command_pressurize(run, options):
    config = run.config
    db = cfg.build_material_db(config)
    program, settings, defects = cfg.build_pressurization(config, db)
    stage1_path = options.stage1 or config["pressurization"]["stage1"]
    stage1 = None
    if stage1_path:
        stage1, source_hash = load_bundle(stage1_path)
        mesh = stage1.mesh
        logger.info("stage-1 fields from %s (configuration %s)", stage1_path,
                    (source_hash or "unknown")[:12])  # fmt: skip
    else:
        mesh = cfg.build_mesh(config, demo="pipe")

    if options.sweep:
        sweep = run_defect_sweep(mesh, program, settings, [None] + defects, stage1,
                                 cfg.threads(config))  # fmt: skip
        for index, result in enumerate(sweep.results):
            run.curves(result, f"pressure_{index}.csv")
        run.curves(sweep, "sweep.csv")
        if not sweep.monotone:
            logger.warning("critical pressures are not monotone in the defect length")
        run.finish({"runs": [result.statistics for result in sweep.results]})
        return

    result = run_pressurization(mesh, program, settings, stage1, defects, RunStatistics())
    logger.info("failure mode %s at %.4g MPa", result.mode, result.critical_pressure / 1e6)
    run.curves(result, "pressure.csv")
    if run.output["csv"] and len(result.crack):
        path = run.path("crack_path.csv")
        write_crack_path(path, result.crack)
        run.manifest.register(path)
    geometry = ElementGeometry(mesh)
    run.vtk(mesh, pressurization_fields(result.fields), "pressurization.vtk", geometry.weights)
    run.finish(result.statistics)


def command_ssy_jr(run, options):
    config = run.config
    db = cfg.build_material_db(config)
    mesh = cfg.build_boundary_layer(config, db)
    curve = run_ssy_jr(mesh, stats=RunStatistics(), **cfg.build_ssy(config, db))
    logger.info("J_Ic = %.4g kJ/m², onset J = %.4g kJ/m²", curve.J_Ic / 1e3,
                curve.J_onset / 1e3)  # fmt: skip
    run.curves(curve, "jr.csv")
    run.finish(dict(curve.statistics, J_Ic=curve.J_Ic, J_onset=curve.J_onset))


def command_inspect(options):
    summary = summarize(options.bundle)
    text = json.dumps(summary, sort_keys=options.sort_keys, indent=(None, 4)[options.pretty],
                      ensure_ascii=False)  # fmt: skip
    if options.outfile == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(options.outfile, "w", encoding="utf-8") as f:
            f.write(text + "\n")


COMMANDS = {
    "ttt": (command_ttt, "isothermal transformation (TTT) curves"),
    "cct": (command_cct, "continuous cooling transformation (CCT) runs"),
    "dilatometry": (command_dilatometry, "strain of one material point along a thermal cycle"),
    "weld": (command_weld, "multi-pass weld: phases, hardness and residual stress"),
    "pressurize": (command_pressurize, "pressurize a pipe section until failure"),
    "ssy-jr": (command_ssy_jr, "J-R curve from a boundary-layer model"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML or JSON configuration file")
    common.add_argument("-o", "--out-dir", default=".", help="output directory")
    common.add_argument("--threads", type=int, help="worker processes (default: "
                        "$WELDFRAC_THREADS or 1)")  # fmt: skip
    common.add_argument("--dt-max", type=float, help="largest weld time step (s)")
    common.add_argument("--seed", type=int, help="random seed (reserved)")
    common.add_argument("--lenient", action="store_true", default=False,
                        help="warn about unknown configuration keys")  # fmt: skip
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", default=False,
                           help="also log solver iterations")  # fmt: skip
    verbosity.add_argument("-q", "--quiet", action="store_true", default=False,
                           help="log warnings and errors only")  # fmt: skip

    parser = argparse.ArgumentParser(
        prog="python -m weldfrac.tool",
        description="Weld process, phase-field fracture and hydrogen embrittlement of "
        "pipeline steels.",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    for name, (_, description) in COMMANDS.items():
        sub = commands.add_parser(name, parents=[common], help=description,
                                  description=description)  # fmt: skip
        if name == "pressurize":
            sub.add_argument("--stage1", help="stage-1 bundle written by the weld command")
            sub.add_argument("--sweep", action="store_true", default=False,
                             help="run each configured defect and a defect-free case")  # fmt: skip

    inspect = commands.add_parser("inspect", help="summarize a stage-1 bundle as JSON")
    inspect.add_argument("bundle", help="bundle file")
    inspect.add_argument("-o", "--outfile", default="-", help="output file")
    inspect.add_argument("-k", "--sort-keys", action="store_true", default=False,
                         help="sort the output of dictionaries alphabetically by key")  # fmt: skip
    inspect.add_argument("-p", "--pretty", action="store_true", default=False,
                         help="indent the output to look good")  # fmt: skip
    return parser


def configure_logging(options):
    level = logging.INFO
    if getattr(options, "verbose", False):
        level = logging.DEBUG
    elif getattr(options, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def main(argv=None):
    options = build_parser().parse_args(argv)
    configure_logging(options)
    try:
        if options.command == "inspect":
            command_inspect(options)
        else:
            function, _ = COMMANDS[options.command]
            function(Run(options.command, options), options)
    except (ConfigError, MetallurgyError, MaterialError, MeshError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (ScenarioError, BundleError) as exc:
        logger.error("%s", exc)
        return EXIT_SCENARIO

    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
