"""Command-line entry point: ``namebias <command> [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .anonymize import PROMPT_IDS, Anonymizer, HttpTextGenerationClient
from .corpus import FORMATS, filter_entity_profile, filter_word_count, load_corpus, load_lexicon
from .embed import BACKEND_KINDS, BackendSpec
from .errors import NameBiasError
from .gazetteer import ALL_KINDS, EntityKind, data_path, load_gazetteer
from .metrics import SimilarityKind
from .perturb import MODES, PerturbationConfig, PerturbationMode, generate_perturbations, write_perturbations

logger = logging.getLogger("namebias")

DEFAULTS = {
    "seed": 0,
    "backend": "hash",
    "model": "",
    "endpoint": None,
    "cache_dir": None,
    "out": None,
    "format": "json",
    "max_in_flight": 4,
    "verbose": False,
    "dim": 256,
    "batch_size": 32,
    "retries": 3,
    "backoff": 0.5,
    "min_interval": 0.0,
    "vocab": None,
    "person_names": None,
    "country_names": None,
    "per_country_dir": None,
    "city_names": None,
    "org_names": None,
    "dataset": None,
    "dataset_format": "tsv",
    "k": 20,
    "mode": "person-and-country",
    "country": None,
    "metric": "cosine",
    "max_words": 250,
    "require_person": False,
    "require_country": False,
    "exclusion_lexicon": None,
    "se_over": "pairs",
    "strategy": None,
    "prompt_id": "remove_all",
    "anon_endpoint": None,
    "input": None,
    "kinds": "person,country,city_or_region,organization",
    "template": None,
    "names": None,
}


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=None)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="JSON config file; flags override its values")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--backend", choices=BACKEND_KINDS, help="embedding backend (default hash)")
    g.add_argument("--model", help="model id sent to the remote backend")
    g.add_argument("--endpoint", help="remote embedding endpoint URL (key via EMBED_API_KEY)")
    g.add_argument("--cache-dir", help="directory for the on-disk embedding cache")
    g.add_argument("--out", help="output path (default: standard output)")
    g.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    g.add_argument("--max-in-flight", type=int, help="concurrent work units (default 4)")
    g.add_argument("--verbose", action="store_const", const=True, help="debug logging")
    g.add_argument("--dim", type=int, help="hash backend dimension (default 256)")
    g.add_argument("--batch-size", type=int, help="texts per remote request (default 32)")
    g.add_argument("--retries", type=int, help="remote retries before failing (default 3)")
    g.add_argument("--backoff", type=float, help="initial retry delay in seconds (default 0.5)")
    g.add_argument("--min-interval", type=float, help="minimum seconds between remote requests")
    g.add_argument("--vocab", help="bow vocabulary file (default: derived from the dataset)")
    g.add_argument("--person-names", help="person name list")
    g.add_argument("--country-names", help="country name list")
    g.add_argument("--per-country-dir", help="directory of <Country>.txt person lists")
    g.add_argument("--city-names", help="city/region name list")
    g.add_argument("--org-names", help="organization name list")
    return p


def _dataset_flags(p, required_format=True):
    p.add_argument("--dataset", help="input dataset path")
    if required_format:
        p.add_argument("--dataset-format", choices=FORMATS, help="corpus format (default tsv)")


def _perturb_flags(p):
    p.add_argument("--k", type=int, help="variants per sample (default 20)")
    p.add_argument("--mode", choices=MODES, help="which names to perturb (default person-and-country)")
    p.add_argument("--country", help="per-country pool for person-only-same-country")


def _anon_flags(p, choices):
    p.add_argument("--strategy", choices=choices, help="anonymization strategy")
    p.add_argument("--prompt-id", choices=PROMPT_IDS, help="prompt for the llm strategy")
    p.add_argument("--anon-endpoint", help="text-generation endpoint (key via ANON_API_KEY)")


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = argparse.ArgumentParser(prog="namebias", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("perturb", parents=[parent], help="write K name-perturbed variants per sample")
    _dataset_flags(p)
    _perturb_flags(p)

    p = sub.add_parser("measure", parents=[parent], help="measure name bias over a corpus")
    _dataset_flags(p)
    _perturb_flags(p)
    p.add_argument("--metric", choices=[k.value for k in SimilarityKind])
    p.add_argument("--max-words", type=int, help="keep samples with fewer words (default 250)")
    p.add_argument("--require-person", action="store_const", const=True)
    p.add_argument("--require-country", action="store_const", const=True)
    p.add_argument("--exclusion-lexicon", help="drop samples mentioning any of these words")
    p.add_argument("--se-over", choices=("pairs", "samples"))

    p = sub.add_parser("sts", parents=[parent], help="triplet AUC (bundled triplets by default)")
    _dataset_flags(p, required_format=False)
    _anon_flags(p, ("none", "remove", "replace", "llm"))

    p = sub.add_parser("summ", parents=[parent], help="summary relevance correlation")
    _dataset_flags(p, required_format=False)
    _anon_flags(p, ("none", "remove", "replace", "llm"))

    p = sub.add_parser("anonymize", parents=[parent], help="anonymize text from a file or stdin")
    p.add_argument("--input", help="input text file (default: standard input)")
    p.add_argument("--kinds", help="comma-separated entity kinds to anonymize")
    _anon_flags(p, ("remove", "replace", "llm"))

    p = sub.add_parser("heatmap", parents=[parent], help="name-swap cosine matrix as CSV")
    p.add_argument("--template", help=f"text file containing {bench.NAME_SLOT} once")
    p.add_argument("--names", help="file with one name per line")
    return parser


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            cfg[key] = value
    cfg["command"] = args.command
    return cfg


def _gazetteer(cfg):
    return load_gazetteer(
        cfg["person_names"] or data_path("person_names.txt"),
        cfg["country_names"] or data_path("country_names.txt"),
        per_country_dir=cfg["per_country_dir"] or data_path("per_country"),
        city_list_path=cfg["city_names"] or data_path("city_region_names.txt"),
        organization_list_path=cfg["org_names"] or data_path("organization_names.txt"),
    )


def _backend(cfg) -> BackendSpec:
    vocab = tuple(load_lexicon(cfg["vocab"])) if cfg["vocab"] else None
    return BackendSpec(
        kind=cfg["backend"], model_id=cfg["model"], endpoint=cfg["endpoint"],
        dim=cfg["dim"] if cfg["backend"] == "hash" else None,
        batch_size=cfg["batch_size"], max_in_flight=cfg["max_in_flight"],
        cache_dir=cfg["cache_dir"], vocabulary=vocab, max_retries=cfg["retries"],
        backoff=cfg["backoff"], min_interval=cfg["min_interval"],
    )


def _pconfig(cfg) -> PerturbationConfig:
    mode = PerturbationMode(cfg["mode"], cfg["country"])
    return PerturbationConfig(k=cfg["k"], mode=mode, seed=cfg["seed"])


def _anonymizer(cfg, gazetteer, default="none") -> Anonymizer:
    strategy = cfg["strategy"] or default
    client = None
    if strategy == "llm":
        client = HttpTextGenerationClient(cfg["anon_endpoint"], max_retries=cfg["retries"],
                                          backoff=cfg["backoff"])
    kinds = frozenset(EntityKind(k.strip()) for k in cfg["kinds"].split(",") if k.strip()) or ALL_KINDS
    return Anonymizer(strategy, gazetteer, kinds=kinds, prompt_id=cfg["prompt_id"], client=client)


def _emit_report(report, cfg):
    if cfg["out"]:
        bench.write_report(report, cfg["out"], cfg["format"])
    elif cfg["format"] == "json":
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False))


def _public_config(cfg) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k != "verbose"}


def cmd_perturb(cfg) -> int:
    gaz = _gazetteer(cfg)
    corpus = load_corpus(cfg["dataset"], cfg["dataset_format"])
    pconfig = _pconfig(cfg)
    sets = [generate_perturbations(s, pconfig, gaz) for s in corpus]
    if cfg["out"]:
        n = write_perturbations(sets, cfg["out"])
        logger.info("wrote %d variants for %d samples to %s", n, len(sets), cfg["out"])
    else:
        for ps in sets:
            for rec in ps.to_records():
                print(json.dumps(rec, ensure_ascii=False))
    return 0


def cmd_measure(cfg) -> int:
    gaz = _gazetteer(cfg)
    corpus = filter_word_count(load_corpus(cfg["dataset"], cfg["dataset_format"]), cfg["max_words"])
    if cfg["require_person"] or cfg["require_country"] or cfg["exclusion_lexicon"]:
        lexicon = load_lexicon(cfg["exclusion_lexicon"]) if cfg["exclusion_lexicon"] else []
        corpus = filter_entity_profile(corpus, gaz, bool(cfg["require_person"]),
                                       bool(cfg["require_country"]), lexicon)
    if len(corpus) == 0:
        raise NameBiasError("no samples left after filtering")
    report = bench.run_bias(corpus, _pconfig(cfg), gaz, _backend(cfg), cfg["metric"],
                            max_in_flight=cfg["max_in_flight"], se_over=cfg["se_over"],
                            metadata={"config": _public_config(cfg)})
    m = report.metrics
    print(f"{cfg['metric']} bias: {m['mean']:.4f} ± {m['standard_error']:.4f} "
          f"(N={m['sample_count']}, K={m['k']}, pairs={m['pair_count']}, skipped={m['skipped']})",
          file=sys.stderr if not cfg["out"] else sys.stdout)
    _emit_report(report, cfg)
    return 0


def cmd_sts(cfg) -> int:
    gaz = _gazetteer(cfg)
    triplets = bench.load_triplets(cfg["dataset"])
    report = bench.run_sts(triplets, _backend(cfg), _anonymizer(cfg, gaz),
                           metadata={"config": _public_config(cfg)})
    print(f"sts auc [{report.anonymization}]: {report.metrics['auc']:.4f}",
          file=sys.stderr if not cfg["out"] else sys.stdout)
    _emit_report(report, cfg)
    return 0


def cmd_summ(cfg) -> int:
    gaz = _gazetteer(cfg)
    samples = bench.load_summ(cfg["dataset"])
    report = bench.run_summ(samples, _backend(cfg), _anonymizer(cfg, gaz),
                            metadata={"config": _public_config(cfg)})
    m = report.metrics
    print(f"summ [{report.anonymization}]: spearman {m['spearman']:.4f}, pearson {m['pearson']:.4f} "
          f"over {m['scores']} scores", file=sys.stderr if not cfg["out"] else sys.stdout)
    _emit_report(report, cfg)
    return 0


def cmd_anonymize(cfg) -> int:
    gaz = _gazetteer(cfg)
    anonymizer = _anonymizer(cfg, gaz, default="remove")
    text = Path(cfg["input"]).read_text(encoding="utf-8") if cfg["input"] else sys.stdin.read()
    result = anonymizer(text, cfg["input"] or "<stdin>")
    if cfg["out"]:
        Path(cfg["out"]).write_text(result, encoding="utf-8")
    else:
        sys.stdout.write(result)
    return 0


def cmd_heatmap(cfg) -> int:
    template_path = cfg["template"] or data_path("heatmap_template.txt")
    template = Path(template_path).read_text(encoding="utf-8").strip()
    names = load_lexicon(cfg["names"])
    matrix = bench.export_heatmap(template, names, _backend(cfg))
    bench.write_heatmap_csv(cfg["out"] or sys.stdout, names, matrix)
    return 0


COMMANDS = {
    "perturb": cmd_perturb,
    "measure": cmd_measure,
    "sts": cmd_sts,
    "summ": cmd_summ,
    "anonymize": cmd_anonymize,
    "heatmap": cmd_heatmap,
}

_REQUIRED = {"perturb": ["dataset"], "measure": ["dataset"], "summ": ["dataset"], "heatmap": ["names"]}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = resolve_config(args, parser)
    missing = [k for k in _REQUIRED.get(cfg["command"], []) if not cfg.get(k)]
    if missing:
        parser.error(f"{cfg['command']}: missing required option(s): "
                     + ", ".join("--" + m.replace("_", "-") for m in missing))
    logging.basicConfig(level=logging.DEBUG if cfg["verbose"] else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logger.info("effective config: %s", json.dumps(_public_config(cfg), sort_keys=True, default=str))
    try:
        return COMMANDS[cfg["command"]](cfg)
    except (NameBiasError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
