"""Command-line entry point: ``medsumm-kit <command> ...``.

Every command writes ``<command>.json`` and ``<command>.txt`` into
``--out-dir`` (plus data files where relevant) and prints the text table.
Exit codes: 0 success, 2 input error, 3 failed internal check.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .codemix import AmbiguityPolicy, Lexicons, corpus_cmi
from .curation import DEFAULT_CUE_TEMPLATE, RequireIn, SymptomTaxonomy, build_trie, filter_corpus, inject_visual_cue
from .data import Category, CorpusError, dedup, load_corpus, split, write_corpus, write_split
from .embedding import embedding_score, load_embeddings
from .factual import (
    EmptyGoldFacts,
    FactAnnotation,
    aggregate_ratings,
    factual_recall,
    mmfcm,
    cohen_kappa,
    multi_annotator_kappa,
    omission_and_hallucination,
)
from .lexical import bleu, meteor, rouge_l, rouge_n
from .report import AUTO_COLUMNS, FACT_COLUMNS, fmt, format_table, manifest, write_report
from .textnorm import postprocess_generation, tokenize

log = logging.getLogger("medsumm_kit")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CHECK = 3


class CheckFailed(RuntimeError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MEDSUMM_KIT_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """Map preserving input order, capped by MEDSUMM_KIT_THREADS."""
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def _read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"malformed JSON ({e.msg})", str(path), lineno) from None
            if not isinstance(obj, dict) or "id" not in obj:
                raise CorpusError("record must be an object with an 'id'", str(path), lineno)
            obj["_line"] = lineno
            out.append(obj)
    return out


# ---------------------------------------------------------------- curate

def cmd_curate(args) -> dict:
    records = load_corpus(args.corpus)
    taxonomy = SymptomTaxonomy.from_file(args.taxonomy) if args.taxonomy else SymptomTaxonomy.default()
    trie = build_trie(taxonomy)
    deduped, removed = dedup(records)
    result = filter_corpus(deduped, trie, RequireIn(args.require_in))
    kept = result.kept
    injected = 0
    if args.inject_cue:
        out = []
        for rec in kept:
            if rec.disorder_phrase and rec.image_ref:
                new = inject_visual_cue(rec, args.cue_template, taxonomy)
                injected += new is not rec
                rec = new
            out.append(rec)
        kept = out
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(kept, out_dir / "curated.jsonl")
    inputs = [args.corpus] + ([args.taxonomy] if args.taxonomy else [])
    config = {"require_in": args.require_in, "inject_cue": args.inject_cue, "cue_template": args.cue_template}
    cats = [c.value for c in taxonomy.categories]
    data = {
        "manifest": manifest("curate", config, inputs, args.seed),
        "input_records": len(records),
        "duplicates_removed": removed,
        "kept": len(kept),
        "dropped_no_match": result.dropped,
        "cues_injected": injected,
        "histogram": {c: result.histogram.get(Category(c), 0) for c in cats},
        "mentions": {c: result.mentions.get(Category(c), 0) for c in cats},
        "kept_ids": [r.id for r in kept],
    }
    rows = [[c, str(data["histogram"][c]), str(data["mentions"][c])] for c in cats]
    rows.append(["total", str(sum(data["histogram"].values())), str(sum(data["mentions"].values()))])
    text = (
        f"input={len(records)} removed={removed} kept={len(kept)} dropped={result.dropped} injected={injected}\n\n"
        + format_table(["category", "records", "mentions"], rows)
    )
    write_report(args.out_dir, "curate", data, text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- split

def cmd_split(args) -> dict:
    records = load_corpus(args.corpus)
    s = split(records, tuple(args.ratios), args.seed, args.stratify)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_split(s, out_dir / "split_ids.json")
    config = {"ratios": list(s.ratios), "stratify": args.stratify}
    data = {
        "manifest": manifest("split", config, [args.corpus], args.seed),
        "n": len(records),
        "counts": {"train": len(s.train_ids), "val": len(s.val_ids), "test": len(s.test_ids)},
        "ratios": list(s.ratios),
    }
    rows = [[k, str(v), f"{r:.4f}"] for (k, v), r in zip(data["counts"].items(), s.ratios)]
    text = format_table(["split", "count", "ratio"], rows)
    write_report(args.out_dir, "split", data, text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- eval-auto

def score_pair(candidate: str, reference: str, cand_emb=None, ref_emb=None) -> dict:
    """Every automatic metric for one candidate/reference pair, as fractions."""
    c = tokenize(postprocess_generation(candidate)).tokens
    r = tokenize(postprocess_generation(reference)).tokens
    b = bleu(c, r)
    bert = None
    if cand_emb is not None and ref_emb is not None:
        bert = embedding_score(cand_emb, ref_emb).f1
    return {
        "R1": rouge_n(c, r, 1).f1,
        "R2": rouge_n(c, r, 2).f1,
        "RL": rouge_l(c, r).f1,
        "B1": b.b1,
        "B2": b.b2,
        "B3": b.b3,
        "B4": b.b4,
        "BERTScore": bert,
        "METEOR": meteor(c, r),
    }


def _auto_cell(col, value, percent):
    if col == "BERTScore":
        return fmt(value, digits=2 if percent else 4)
    return fmt(value, percent=percent)


def cmd_eval_auto(args) -> dict:
    refs = {r.id: r for r in load_corpus(args.references)}
    cands = _read_jsonl(args.candidates)
    if not cands:
        raise CorpusError("candidates file is empty", str(args.candidates))
    for c in cands:
        if not isinstance(c.get("summary"), str):
            raise CorpusError("candidate needs a string 'summary'", str(args.candidates), c["_line"])
    cand_emb = load_embeddings(args.cand_embeddings) if args.cand_embeddings else {}
    ref_emb = load_embeddings(args.ref_embeddings) if args.ref_embeddings else {}
    matched = [c for c in cands if str(c["id"]) in refs]
    unmatched = [str(c["id"]) for c in cands if str(c["id"]) not in refs]

    def work(c):
        cid = str(c["id"])
        return score_pair(c["summary"], refs[cid].golden_summary, cand_emb.get(cid), ref_emb.get(cid))

    scores = _ordered_map(work, matched)
    per_record = []
    models: dict[str, list] = {}
    for c, s in zip(matched, scores):
        model = str(c.get("model", "candidate"))
        per_record.append({"id": str(c["id"]), "model": model, **s})
        models.setdefault(model, []).append(s)
    rows_data = []
    for model, ss in models.items():
        rows_data.append({"model": model, "n": len(ss), "means": {col: _mean(s[col] for s in ss) for col in AUTO_COLUMNS}})
    inputs = [args.candidates, args.references] + [p for p in (args.cand_embeddings, args.ref_embeddings) if p]
    data = {
        "manifest": manifest("eval-auto", {"percent": args.percent}, inputs, args.seed),
        "columns": list(AUTO_COLUMNS),
        "rows": rows_data,
        "per_record": per_record,
        "unmatched_ids": unmatched,
    }
    table = format_table(
        ["Model", "n", *AUTO_COLUMNS],
        [[r["model"], str(r["n"])] + [_auto_cell(col, r["means"][col], args.percent) for col in AUTO_COLUMNS] for r in rows_data],
    )
    text = table
    if unmatched:
        text += f"\n\nexcluded {len(unmatched)} unmatched id(s): {', '.join(unmatched)}"
    write_report(args.out_dir, "eval_auto", data, text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- eval-facts

def cmd_eval_facts(args) -> dict:
    anns = _read_jsonl(args.annotations)
    if not anns:
        raise CorpusError("annotations file is empty", str(args.annotations))
    known = {r.id for r in load_corpus(args.corpus)} if args.corpus else None
    errors = []
    unmatched = []
    groups: dict[tuple, dict] = {}
    per_record = []
    for a in anns:
        aid = str(a["id"])
        if known is not None and aid not in known:
            unmatched.append(aid)
            continue
        model = str(a.get("model", "model"))
        modality = str(a.get("modality", "multimodal"))
        if modality not in ("unimodal", "multimodal"):
            raise CorpusError(f"modality must be unimodal or multimodal, got {modality!r}", str(args.annotations), a["_line"])
        try:
            ann = FactAnnotation(
                frozenset(a.get("gold_facts", ())),
                frozenset(a.get("generated_facts", ())),
                a.get("disorder_judgment", "Absent"),
            )
        except ValueError as e:
            raise CorpusError(str(e), str(args.annotations), a["_line"]) from None
        ratings = a.get("ratings") or {}
        g = groups.setdefault((model, modality), {"fr": [], "hr": [], "mm": [], "ratings": []})
        try:
            fr = factual_recall(ann)
            om, hr = omission_and_hallucination(ann)
            mm = mmfcm(ann) if modality == "multimodal" else None
        except EmptyGoldFacts:
            errors.append({"id": aid, "line": a["_line"], "error": "empty gold_facts"})
            continue
        g["ratings"].append(ratings)
        g["fr"].append(fr)
        g["hr"].append(hr)
        if mm is not None:
            g["mm"].append(mm)
        per_record.append(
            {"id": aid, "model": model, "modality": modality, "factual_recall": fr, "omission_recall": om, "hallucination_rate": hr, "mmfcm": mm}
        )
    rows = []
    for (model, modality), g in groups.items():
        summary = aggregate_ratings(g["ratings"])
        clin = summary.means.get("clinical_eval")
        rows.append(
            {
                "model": model,
                "modality": modality,
                "n": len(g["fr"]),
                "Clinical-EvalScore": clin,
                "Factual Recall": _mean(g["fr"]),
                "Hallucination Rate": _mean(g["hr"]),
                "MMFCM Score": _mean(g["mm"]) if modality == "multimodal" else None,
                "ratings": {k: round(v, 2) for k, v in summary.means.items()},
            }
        )
    data = {
        "manifest": manifest("eval-facts", {}, [args.annotations] + ([args.corpus] if args.corpus else []), args.seed),
        "columns": list(FACT_COLUMNS),
        "rows": rows,
        "per_record": per_record,
        "errors": errors,
        "unmatched_ids": unmatched,
    }
    table = format_table(
        ["Model", "Modality", "n", *FACT_COLUMNS],
        [[r["model"], r["modality"], str(r["n"])] + [fmt(r[c], digits=2) for c in FACT_COLUMNS] for r in rows],
    )
    text = table
    if errors:
        text += f"\n\nexcluded {len(errors)} record(s) with errors:" + "".join(f"\n  line {e['line']} id={e['id']}: {e['error']}" for e in errors)
    if unmatched:
        text += f"\n\nexcluded {len(unmatched)} id(s) not in corpus: {', '.join(unmatched)}"
    write_report(args.out_dir, "eval_facts", data, text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- cmi

def cmd_cmi(args) -> dict:
    lex = Lexicons.from_files(args.lexicon_lang1, args.lexicon_lang2)
    if args.text:
        lines = [l for l in Path(args.input).read_text(encoding="utf-8").splitlines() if l.strip()]
        ids = [str(i) for i in range(1, len(lines) + 1)]
    else:
        recs = load_corpus(args.input)
        lines = [r.query_codemixed for r in recs]
        ids = [r.id for r in recs]
    result = corpus_cmi([tokenize(t) for t in lines], lex, AmbiguityPolicy(args.ambiguity_policy))
    config = {"policy": args.ambiguity_policy, "text": args.text}
    data = {
        "manifest": manifest("cmi", config, [args.input, args.lexicon_lang1, args.lexicon_lang2], args.seed),
        "mean_cmi": result.mean_cmi,
        "records": len(lines),
        "skipped_empty": result.skipped,
        "per_record": [{"id": i, "cmi": v} for i, v in zip(ids, result.per_record)],
    }
    text = f"mean CMI: {result.mean_cmi:.2f} over {len(lines) - result.skipped} record(s) ({result.skipped} empty skipped)"
    write_report(args.out_dir, "cmi", data, text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- kappa

def cmd_kappa(args) -> dict:
    lists = []
    for p in args.labels:
        lists.append([l.strip() for l in Path(p).read_text(encoding="utf-8").splitlines() if l.strip()])
    if len(lists) < 2:
        raise ValueError("kappa needs at least two label files")
    names = [Path(p).name for p in args.labels]
    pairs = []
    for i in range(len(lists)):
        for j in range(i + 1, len(lists)):
            pairs.append({"a": names[i], "b": names[j], "kappa": cohen_kappa(lists[i], lists[j])})
    mean = multi_annotator_kappa(lists)
    data = {"manifest": manifest("kappa", {}, args.labels, args.seed), "pairs": pairs, "mean_kappa": mean, "items": len(lists[0])}
    text = format_table(["annotator A", "annotator B", "kappa"], [[p["a"], p["b"], f"{p['kappa']:.4f}"] for p in pairs])
    text += f"\n\nmean pairwise kappa: {mean:.4f}"
    write_report(args.out_dir, "kappa", data, text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- fusion-demo

def cmd_fusion_demo(args) -> dict:
    from .fusion import FusionConfig, FusionModel
    from .fusion import toy

    overrides = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    overrides["seed"] = args.seed
    cfg = FusionConfig(**overrides)
    vocab = toy.toy_vocab(cfg.vocab_size)
    samples = toy.toy_task(cfg, vocab, seed=args.seed)
    examples = toy.to_examples(cfg, samples)
    model = FusionModel.init(cfg)
    frozen_before = model.frozen_digest()
    train_log = toy.train(model, examples, args.steps, args.lr)
    frozen_ok = model.frozen_digest() == frozen_before
    tiny = toy.tiny_config(args.seed)
    gc = toy.gradient_check(FusionModel.init(tiny), toy.tiny_examples(tiny, seed=args.seed), seed=args.seed)
    grad_ok = bool(gc.max_rel_error < 1e-3)
    loss_ok = bool(train_log.ratio < 0.5)
    if args.checkpoint:
        model.save(args.checkpoint)
    data = {
        "manifest": manifest("fusion-demo", {**cfg.to_dict(), "steps": args.steps, "lr": args.lr}, [args.config] if args.config else [], args.seed),
        "config": cfg.to_dict(),
        "initial_loss": train_log.initial,
        "final_loss": train_log.final,
        "loss_ratio": train_log.ratio,
        "gradient_check": {"max_rel_error": float(gc.max_rel_error), "n_checked": gc.n_checked, "pass": grad_ok},
        "frozen_unchanged": frozen_ok,
        "pass": grad_ok and loss_ok and frozen_ok,
    }
    text = "\n".join(
        [
            f"gradient check: {'PASS' if grad_ok else 'FAIL'} (max rel error {gc.max_rel_error:.3e} over {gc.n_checked} scalars)",
            f"loss: initial {train_log.initial:.4f} final {train_log.final:.4f} ratio {train_log.ratio:.4f} ({'PASS' if loss_ok else 'FAIL'})",
            f"frozen base unchanged: {'PASS' if frozen_ok else 'FAIL'}",
        ]
    )
    write_report(args.out_dir, "fusion_demo", data, text)
    if not data["pass"]:
        raise CheckFailed(text)
    return {"data": data, "text": text}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medsumm-kit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for report files")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", parents=[common], help="dedup + symptom-term filter (+ optional cue injection)")
    p.add_argument("corpus")
    p.add_argument("--taxonomy", help="taxonomy JSON (default: built-in)")
    p.add_argument("--require-in", default="Query", choices=[r.value for r in RequireIn])
    p.add_argument("--inject-cue", action="store_true", help="append the image-reference sentence")
    p.add_argument("--cue-template", default=DEFAULT_CUE_TEMPLATE)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("split", parents=[common], help="seeded train/val/test split")
    p.add_argument("corpus")
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.05, 0.15], metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--stratify", action="store_true", help="preserve per-category ratios")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval-auto", parents=[common], help="ROUGE/BLEU/BERTScore/METEOR report")
    p.add_argument("candidates", help="JSONL of {id, summary[, model]}")
    p.add_argument("references", help="corpus JSONL with golden_summary")
    p.add_argument("--percent", action="store_true", help="render lexical scores as percentages")
    p.add_argument("--cand-embeddings")
    p.add_argument("--ref-embeddings")
    p.set_defaults(func=cmd_eval_auto)

    p = sub.add_parser("eval-facts", parents=[common], help="fact-based human-evaluation report")
    p.add_argument("annotations")
    p.add_argument("--corpus", help="restrict to ids present in this corpus")
    p.set_defaults(func=cmd_eval_facts)

    p = sub.add_parser("cmi", parents=[common], help="code-mixing index of a corpus")
    p.add_argument("input", help="corpus JSONL, or plain text with --text")
    p.add_argument("--text", action="store_true", help="input is one utterance per line")
    p.add_argument("--lexicon-lang1", required=True)
    p.add_argument("--lexicon-lang2", required=True)
    p.add_argument("--ambiguity-policy", default="Independent", choices=[a.value for a in AmbiguityPolicy])
    p.set_defaults(func=cmd_cmi)

    p = sub.add_parser("kappa", parents=[common], help="Cohen's kappa (pairwise mean for >2 annotators)")
    p.add_argument("labels", nargs="+", help="one file per annotator, one label per line")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("fusion-demo", parents=[common], help="toy fusion training + gradient check")
    p.add_argument("--config", help="JSON with FusionConfig overrides")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--checkpoint", help="write the trained model here (.npz)")
    p.set_defaults(func=cmd_fusion_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        result = args.func(args)
    except CheckFailed as e:
        print(e, file=sys.stderr)
        return EXIT_CHECK
    except (CorpusError, ValueError, OSError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    print(result["text"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
