"""Command-line entry point: ``aapa generate | run | guidance | compare``.

Exit status is 0 on success, 1 for invalid input (arguments, files, streams)
and 2 when a scenario fails while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from aapa.attachment import AttachmentError, LACATER_REGISTRY, hierarchy_timeline
from aapa.errors import StreamError
from aapa.evaluation import EvalReport, compare
from aapa.guidance import build_tracking_vector, build_weight_matrix, column_mapping, write_matrix, write_vector
from aapa.records import (
    read_actions,
    read_annotations,
    read_config,
    read_detections,
    read_registry,
    write_actions,
    write_annotations,
    write_detections,
    write_registry,
)
from aapa.runner import make_config, run_scenario, variant_name
from aapa.simulator import (
    PROFILES,
    TEMPLATES,
    GeneratorParams,
    ScenarioScript,
    degrade,
    generate_scenario,
    import_lacater,
    render_ground_truth,
)

log = logging.getLogger("aapa")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

RUN_DEFAULTS = {
    "model": "aapa",
    "tau": "6500",
    "appear": "3",
    "disappear": "5",
    "occlusion-overlap": "0.4",
    "noise": "pp",
    "seed": "0",
    "workers": "1",
}


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _profile(name: str, seed: int):
    if name not in PROFILES:
        raise ValidationError(f"unknown noise profile {name!r}; known: {', '.join(sorted(PROFILES))}")
    p = PROFILES[name]
    return type(p)(**{**asdict(p), "seed": seed})


# --------------------------------------------------------------------------- generate


def _write_scenario(root: Path, name: str, script: ScenarioScript, anns, noises: list[str]) -> None:
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    script.save(d / "script.json")
    write_annotations(d / "truth.txt", anns)
    write_actions(d / "actions.txt", script.actions)
    for i, noise in enumerate(noises):
        write_detections(d / f"detections-{noise}.txt", degrade(anns, _profile(noise, _derive_seed(script.seed, i))))


def _parse_mix(text: str) -> dict[str, float]:
    if text in TEMPLATES:
        return {text: 1.0}
    mix = {}
    for item in text.split(","):
        key, _, weight = item.partition("=")
        if key not in TEMPLATES:
            raise ValidationError(f"unknown template {key!r}")
        mix[key] = float(weight or 1)
    return mix


def cmd_generate(args) -> int:
    root = Path(args.corpus)
    noises = [n for n in args.noise.split(",") if n]
    for n in noises:
        _profile(n, 0)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    if args.lacater_import:
        files = sorted(Path(args.lacater_import).glob("*.json"))
        if not files:
            raise ValidationError(f"no *.json annotation files in {args.lacater_import}")
        for i, f in enumerate(files):
            try:
                script, anns = import_lacater(f)
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"{f}: {exc}") from None
            script.seed = _derive_seed(args.seed, i)
            _write_scenario(root, f.stem, script, anns, noises)
            names.append(f.stem)
        mix = {}
    else:
        mix = _parse_mix(args.template)
        keys = sorted(mix)
        weights = np.array([mix[k] for k in keys], dtype=float)
        picker = np.random.default_rng(args.seed)
        for i in range(args.n):
            template = keys[int(picker.choice(len(keys), p=weights / weights.sum()))]
            params = GeneratorParams(n_frames=args.frames, template=template,
                                     min_objects=args.min_objects, max_objects=args.max_objects)
            script = generate_scenario(params, _derive_seed(args.seed, i))
            name = f"s{i:04d}-{template}"
            _write_scenario(root, name, script, render_ground_truth(script), noises)
            names.append(name)
    write_registry(root / "registry.txt", LACATER_REGISTRY)
    manifest = {"scenarios": names, "seed": args.seed, "noise": noises, "mix": mix, "frames": args.frames}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(names)} scenarios to {root}")
    return EXIT_OK


# --------------------------------------------------------------------------- run


def _load_corpus(root: Path) -> list[str]:
    manifest = root / "manifest.json"
    if not manifest.is_file():
        raise ValidationError(f"{root} has no manifest.json")
    return json.loads(manifest.read_text())["scenarios"]


def _load_scenario(root: Path, name: str, noise: str, seed: int):
    d = root / name
    try:
        script = ScenarioScript.load(d / "script.json")
        anns = read_annotations(d / "truth.txt")
        stream_file = d / f"detections-{noise}.txt"
        if stream_file.is_file():
            stream = read_detections(stream_file, len(anns))
        else:
            stream = degrade(anns, _profile(noise, _derive_seed(seed, script.seed)))
        if (d / "actions.txt").is_file():
            script.actions = read_actions(d / "actions.txt")
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"{d}: {exc}") from None
    if len(stream) != len(anns) or len(anns) != script.n_frames:
        raise ValidationError(f"{d}: {len(stream)} detection frames, {len(anns)} annotation frames, "
                              f"script says {script.n_frames}")
    return script, anns, stream


def _run_one(job):
    root, name, noise, seed, cfg, registry, label = job
    script, anns, stream = _load_scenario(root, name, noise, seed)
    run = run_scenario(script, anns, stream, cfg, registry, model_name=label, noise=noise)
    return name, run.predictions, run.report


def _settings(args) -> dict[str, str]:
    merged = dict(RUN_DEFAULTS)
    if args.config:
        try:
            merged.update(read_config(Path(args.config)))
        except (OSError, StreamError) as exc:
            raise ValidationError(str(exc)) from None
    for key in ("model", "tau", "appear", "disappear", "occlusion-overlap", "noise", "seed", "corpus", "out",
                "registry", "workers"):
        value = getattr(args, key.replace("-", "_"))
        if value is not None:
            merged[key] = str(value)
    for key in ("corpus", "out"):
        if key not in merged:
            raise ValidationError(f"--{key} is required")
    return merged


def cmd_run(args) -> int:
    s = _settings(args)
    try:
        taus = [float(t) for t in s["tau"].split(",")]
        appear, disappear = int(s["appear"]), int(s["disappear"])
        overlap, seed, workers = float(s["occlusion-overlap"]), int(s["seed"]), int(s["workers"])
        cfgs = [make_config(s["model"], tau, appear, disappear, overlap) for tau in taus]
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    root, out = Path(s["corpus"]), Path(s["out"])
    try:
        registry = read_registry(Path(s["registry"])) if "registry" in s else None
    except (OSError, ValueError) as exc:
        raise ValidationError(f"registry: {exc}") from None
    names = _load_corpus(root)
    noise = s["noise"]
    # validate every scenario before any tracking starts
    for name in names:
        _load_scenario(root, name, noise, seed)

    for cfg in cfgs:
        label = variant_name(s["model"], cfg.alignment.tau)
        jobs = [(root, name, noise, seed, cfg, registry, label) for name in names]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
        target = out / label
        (target / "predictions").mkdir(parents=True, exist_ok=True)
        report = EvalReport(label, cfg.alignment.tau, noise, seed)
        for name, lines, rep in results:
            (target / "predictions" / f"{name}.txt").write_text("\n".join(lines) + "\n")
            report = report.merge(rep)
        (target / "report.json").write_text(report.to_json())
        (target / "report.txt").write_text(report.to_text())
        print(report.to_text(), end="")
    return EXIT_OK


# --------------------------------------------------------------------------- guidance and compare


def cmd_guidance(args) -> int:
    root, out = Path(args.corpus), Path(args.out)
    for name in _load_corpus(root):
        script = ScenarioScript.load(root / name / "script.json")
        anns = read_annotations(root / name / "truth.txt")
        target = args.target or script.target
        if target not in script.classes:
            raise ValidationError(f"{name}: unknown target {target!r}")
        timeline = hierarchy_timeline(script.actions, script.registry, len(anns))
        v = build_tracking_vector(anns, timeline, target)
        cols = column_mapping(anns)
        if len(cols) > args.K:
            raise ValidationError(f"{name}: {len(cols)} objects exceed K={args.K}")
        m = build_weight_matrix(v, args.K, args.w, args.normalize, cols)
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        write_vector(d / "vector.txt", v)
        write_matrix(d / "weights.txt", m)
        (d / "columns.txt").write_text("".join(f"{c} {oid}\n" for oid, c in cols.items()))
        write_actions(d / "actions.txt", script.actions)
    print(f"wrote guidance to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        try:
            reports.append(json.loads(Path(p).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{p}: {exc}") from None
    table = compare(reports)
    if args.out:
        Path(args.out).with_suffix(".txt").write_text(table.to_text())
        Path(args.out).with_suffix(".json").write_text(table.to_json())
    print(table.to_text(), end="")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aapa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic scenario corpus")
    g.add_argument("--corpus", required=True)
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--template", default="visible,occluded,contained,carried",
                   help="one template, or a weighted mix like 'carried=3,visible=1'")
    g.add_argument("--frames", type=int, default=300)
    g.add_argument("--min-objects", type=int, default=5)
    g.add_argument("--max-objects", type=int, default=15)
    g.add_argument("--noise", default="pp,od", help="comma-separated noise profiles to render")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lacater-import", metavar="DIR", help="convert LA-CATER-style JSON files instead")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="track a corpus with PA or AAPA and score it")
    r.add_argument("--config", help="key = value file; flags override it")
    r.add_argument("--model", choices=["pa", "aapa"])
    r.add_argument("--tau", help="cost cap, or a comma-separated sweep")
    r.add_argument("--appear", type=int)
    r.add_argument("--disappear", type=int)
    r.add_argument("--occlusion-overlap", type=float)
    r.add_argument("--noise")
    r.add_argument("--seed", type=int)
    r.add_argument("--corpus")
    r.add_argument("--out")
    r.add_argument("--registry")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("guidance", help="write tracking vectors and weight matrices")
    q.add_argument("--corpus", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--target")
    q.add_argument("--w", type=float, default=100.0)
    q.add_argument("--K", type=int, default=15)
    q.add_argument("--normalize", action="store_true")
    q.set_defaults(func=cmd_guidance)

    c = sub.add_parser("compare", help="tabulate report.json files")
    c.add_argument("reports", nargs="+")
    c.add_argument("--out", help="path stem for .txt and .json tables")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, StreamError, FileNotFoundError) as exc:
        print(f"aapa: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (AttachmentError, ValueError, RuntimeError) as exc:
        print(f"aapa: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
