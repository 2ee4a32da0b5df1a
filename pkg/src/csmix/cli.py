"""Batch CLI wiring the pipeline stages into reproducible commands.

Commands: validate, mix-text, splice, sentence-mix, stats, score, augment.
Every command that writes artifacts also writes a run_config.json echoing
the effective parameters and tool version. Exit codes: 0 success (skips
allowed), 1 validation error, 2 I/O error. All randomness funnels through
--seed; --workers only changes wall time, never output bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .align import build_segment_inventory, parse_alignment_file, parse_ctm
from .audio import (
    AugmentConfig,
    SpliceConfig,
    WavCache,
    mix_noise,
    read_wav,
    render_mixed_utterance,
    speed_perturb,
    splice,
    wav_header,
    write_wav,
)
from .corpus import Manifest, Utterance, read_manifest, write_manifest
from .errors import ValidationError
from .metrics import CMI_VARIANT, corpus_stats
from .mixer import (
    MixConfig,
    concat_plan_to_record,
    mix_corpus,
    plan_from_record,
    plan_to_record,
    sentence_mix,
    skip_to_record,
)
from .rng import stream
from .scorer import NormPolicy, read_hyp_file, score_corpus

log = logging.getLogger("csmix")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def _write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False))
            f.write("\n")


def _read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                out.append(json.loads(raw))
            except json.JSONDecodeError as e:
                raise ValidationError(f"malformed JSON ({e.msg})", path, lineno) from None
    return out


def _echo_config(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    params = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "func"
    }
    rec = {"command": command, "version": __version__, "parameters": params}
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as f:
        json.dump(rec, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# Worker state is installed once per process so large shared inputs
# (segment inventories, manifests) are not re-pickled per task.
_CTX = None
_CACHE = None


def _init_ctx(ctx):
    global _CTX, _CACHE
    _CTX = ctx
    _CACHE = WavCache()


def _run_ordered(worker, n_items: int, ctx, workers: int):
    if workers <= 1:
        _init_ctx(ctx)
        return [worker(i) for i in range(n_items)]
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_ctx, initargs=(ctx,)
    ) as ex:
        return list(ex.map(worker, range(n_items), chunksize=8))


# --- validate -------------------------------------------------------------


def cmd_validate(args) -> int:
    manifest = read_manifest(args.manifest)
    problems = []
    if args.check_audio:
        for u in manifest:
            if u.audio is None:
                continue
            if not Path(u.audio).exists():
                problems.append(f"{u.id}: audio file not found: {u.audio}")
                continue
            frames, rate = wav_header(u.audio)
            if rate != u.sample_rate:
                problems.append(
                    f"{u.id}: sample_rate {u.sample_rate} but file has {rate}"
                )
            if abs(u.duration_s * rate - frames) > 1.0:
                problems.append(
                    f"{u.id}: duration_s {u.duration_s} but file has "
                    f"{frames} frames ({frames / rate:.6f}s)"
                )
    if problems:
        for p in problems:
            print(f"INVALID {p}")
        return EXIT_VALIDATION
    inv = ",".join(sorted(manifest.language_inventory)) or "-"
    print(
        f"OK {args.manifest}: {len(manifest)} utterances, "
        f"{manifest.total_hours:.4f} hours, languages {inv}"
    )
    if args.out:
        out = _prepare_out(args)
        _echo_config(out, "validate", args)
    return EXIT_OK


# --- mix-text --------------------------------------------------------------


def _read_token_lines(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]


def cmd_mix_text(args) -> int:
    keep = frozenset()
    if args.keep_words:
        with open(args.keep_words, encoding="utf-8") as f:
            keep = frozenset(w.strip() for w in f if w.strip())
    cfg = MixConfig(
        ratio_min=args.ratio_min,
        ratio_max=args.ratio_max,
        min_sentence_len=args.min_sentence_len,
        seed=args.seed,
        max_phrase_len=args.max_phrase_len,
        keep_words=keep,
    )
    manifest = read_manifest(args.manifest)
    tgt_tokens = _read_token_lines(args.target_text)
    alignments = parse_alignment_file(
        args.alignments,
        [len(u.tokens) for u in manifest],
        [len(toks) for toks in tgt_tokens],
    )
    mixed, plans, skips = mix_corpus(manifest, tgt_tokens, alignments, cfg, args.tgt_lang)
    out = _prepare_out(args)
    write_manifest(mixed, out / "mixed_manifest.jsonl")
    _write_jsonl(out / "mix_plans.jsonl", (plan_to_record(p) for p in plans))
    _write_jsonl(out / "skips.jsonl", (skip_to_record(s) for s in skips))
    _echo_config(out, "mix-text", args)
    log.info(
        "mix-text: %d mixed, %d skipped -> %s", len(plans), len(skips), out
    )
    print(f"mixed {len(plans)} utterances, skipped {len(skips)} -> {out}")
    return EXIT_OK


# --- splice ----------------------------------------------------------------


def _splice_worker(i: int):
    (plans, src_utts, mixed_utts, timings, inventory, cfg, seed, out_dir, max_ngram) = _CTX
    plan = plans[i]
    src = src_utts[plan.utt_id]
    src_audio = _CACHE.get(src.audio)
    buf, report = render_mixed_utterance(
        src,
        src_audio,
        timings.get(plan.utt_id, []),
        plan,
        inventory,
        cfg,
        seed,
        _CACHE.get,
        max_ngram=max_ngram,
    )
    if buf is None:
        return report.to_record(), None
    rel = Path("audio") / f"{plan.utt_id}.wav"
    write_wav(Path(out_dir) / rel, buf)
    mixed = mixed_utts[plan.utt_id]
    entry = Utterance(
        id=mixed.id,
        tokens=mixed.tokens,
        text=mixed.text,
        audio=str(Path(out_dir) / rel),
        sample_rate=buf.sample_rate,
        duration_s=buf.duration_s,
    )
    return report.to_record(), entry


def cmd_splice(args) -> int:
    cfg = SpliceConfig(
        norm_mode=args.norm,
        crossfade_ms=args.crossfade_ms,
        inter_segment_silence_ms=args.silence_ms,
        target_peak_policy=args.target_peak_policy,
        target_peak_value=args.target_peak,
    )
    src_manifest = read_manifest(args.manifest)
    mixed_manifest = read_manifest(args.mixed_manifest)
    plans = [plan_from_record(r) for r in _read_jsonl(args.plans)]
    timings = parse_ctm(args.ctm)
    donor_manifest = read_manifest(args.donor_manifest)
    donor_timings = parse_ctm(args.donor_ctm)
    inventory = build_segment_inventory(
        donor_timings, donor_manifest, max_ngram=args.max_phrase_len
    )

    src_utts = src_manifest.by_id()
    mixed_utts = mixed_manifest.by_id()
    for plan in plans:
        if plan.utt_id not in src_utts:
            raise ValidationError(f"plan utterance '{plan.utt_id}' not in source manifest")
        if plan.utt_id not in mixed_utts:
            raise ValidationError(f"plan utterance '{plan.utt_id}' not in mixed manifest")
        if src_utts[plan.utt_id].audio is None:
            raise ValidationError(f"source utterance '{plan.utt_id}' has no audio")

    out = _prepare_out(args)
    (out / "audio").mkdir(exist_ok=True)
    ctx = (
        plans,
        src_utts,
        mixed_utts,
        timings,
        inventory,
        cfg,
        args.seed,
        str(out),
        args.max_phrase_len,
    )
    results = _run_ordered(_splice_worker, len(plans), ctx, args.workers)

    entries = [entry for _, entry in results if entry is not None]
    reports = [rec for rec, _ in results]
    write_manifest(Manifest(tuple(entries)), out / "manifest.jsonl")
    _write_jsonl(out / "render_report.jsonl", reports)
    _echo_config(out, "splice", args)
    n_skip = sum(1 for rec in reports if "skipped" in rec)
    print(f"rendered {len(entries)} utterances, skipped {n_skip} -> {out}")
    return EXIT_OK


# --- sentence-mix -----------------------------------------------------------


def _concat_worker(i: int):
    (plans, out_dir, gap_ms) = _CTX
    plan = plans[i]
    segs = [_CACHE.get(p.audio) for p in plan.parts]
    cfg = SpliceConfig(
        norm_mode="off", crossfade_ms=0.0, inter_segment_silence_ms=gap_ms
    )
    buf = splice(segs, None, cfg)
    rel = Path("audio") / f"{plan.utt_id}.wav"
    write_wav(Path(out_dir) / rel, buf)
    return plan.utt_id, str(Path(out_dir) / rel), buf.duration_s, buf.sample_rate


def cmd_sentence_mix(args) -> int:
    a = read_manifest(args.manifest_a)
    b = read_manifest(args.manifest_b)
    manifest, plans = sentence_mix(
        a, b, args.per_output, args.gap_s, args.seed, args.num_outputs
    )
    out = _prepare_out(args)
    if args.render_audio:
        for plan in plans:
            for part in plan.parts:
                if part.audio is None:
                    raise ValidationError(
                        f"--render-audio: utterance '{part.utt_id}' has no audio"
                    )
        (out / "audio").mkdir(exist_ok=True)
        ctx = (plans, str(out), args.gap_s * 1000.0)
        rendered = _run_ordered(_concat_worker, len(plans), ctx, args.workers)
        by_id = {utt_id: (path, dur, rate) for utt_id, path, dur, rate in rendered}
        manifest = Manifest(
            tuple(
                Utterance(
                    id=u.id,
                    tokens=u.tokens,
                    text=u.text,
                    audio=by_id[u.id][0],
                    sample_rate=by_id[u.id][2],
                    duration_s=by_id[u.id][1],
                )
                for u in manifest
            )
        )
    write_manifest(manifest, out / "manifest.jsonl")
    _write_jsonl(out / "concat_plans.jsonl", (concat_plan_to_record(p) for p in plans))
    _echo_config(out, "sentence-mix", args)
    print(f"sentence-mixed {len(manifest)} outputs -> {out}")
    return EXIT_OK


# --- stats -------------------------------------------------------------------


def cmd_stats(args) -> int:
    names = args.names.split(",") if args.names else None
    if names and len(names) != len(args.manifests):
        raise ValidationError("--names count does not match manifest count")
    rows = []
    for idx, path in enumerate(args.manifests):
        m = read_manifest(path)
        st = corpus_stats(m, k=args.k)
        name = names[idx] if names else Path(path).stem
        rows.append(
            {
                "dataset": name,
                "hours": st.hours,
                "cmi": st.cmi,
                "i_index": st.i_index,
                "m_index": st.m_index,
                "n_utterances": st.n_utterances,
                "per_lang_token_fractions": st.per_lang_token_fractions,
            }
        )
    lines = [f"# {CMI_VARIANT}"]
    lines.append(
        f"{'dataset':<28} {'Hours':>10} {'CMI':>8} {'I-Index':>8} {'M-Index':>8}"
    )
    for r in rows:
        lines.append(
            f"{r['dataset']:<28} {r['hours']:>10.2f} {r['cmi']:>8.2f} "
            f"{r['i_index']:>8.2f} {r['m_index']:>8.2f}"
        )
    table = "\n".join(lines)
    print(table)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump({"cmi_variant": CMI_VARIANT, "datasets": rows}, f,
                      ensure_ascii=False, indent=2)
            f.write("\n")
    if args.out:
        out = _prepare_out(args)
        with open(out / "stats.txt", "w", encoding="utf-8") as f:
            f.write(table + "\n")
        with open(out / "stats.json", "w", encoding="utf-8") as f:
            json.dump({"cmi_variant": CMI_VARIANT, "datasets": rows}, f,
                      ensure_ascii=False, indent=2)
            f.write("\n")
        _echo_config(out, "stats", args)
    return EXIT_OK


# --- score -------------------------------------------------------------------


def cmd_score(args) -> int:
    policy = NormPolicy(
        lowercase_latin=not args.keep_case,
        strip_punct=not args.keep_punct,
        strip_numbers=not args.keep_numbers,
    )
    ref = read_manifest(args.ref)
    hyps = read_hyp_file(args.hyp)
    result = score_corpus(ref, hyps, args.metric, policy, with_trace=args.trace)
    rep = result.report
    lines = [
        f"# metric={args.metric} normalization: {policy.describe()}",
        f"# utterances={len(result.per_utt)} missing_hyp={len(result.missing_hyp_ids)} "
        f"empty_ref={len(result.empty_ref_ids)}",
        f"N={rep.n_ref} C={rep.hits} S={rep.substitutions} D={rep.deletions} "
        f"I={rep.insertions}",
        f"{args.metric.upper()}={rep.rate:.2f} corr={rep.corr_rate:.2f} "
        f"sub={rep.sub_rate:.2f} del={rep.del_rate:.2f} ins={rep.ins_rate:.2f}",
    ]
    table = "\n".join(lines)
    print(table)
    if args.per_utt:
        _write_jsonl(args.per_utt, result.per_utt)
    if args.out:
        out = _prepare_out(args)
        with open(out / "score.txt", "w", encoding="utf-8") as f:
            f.write(table + "\n")
        _write_jsonl(out / "per_utt.jsonl", result.per_utt)
        _echo_config(out, "score", args)
    return EXIT_OK


# --- augment ------------------------------------------------------------------


def _augment_worker(i: int):
    (utts, acfg, seed, noise_files, out_dir) = _CTX
    u = utts[i]
    rng = stream(seed, u.id, "augment")
    rel = Path("audio") / f"{u.id}.wav"
    dst = Path(out_dir) / rel
    rec = {"utt_id": u.id, "speed": None, "noise": None, "snr_db": None, "rescale": 1.0}

    apply_speed = rng.random() < acfg.speed_prob
    factor = rng.choice(acfg.speed_factors) if apply_speed else None
    apply_noise = rng.random() < acfg.noise_prob
    noise_path = snr = None
    if apply_noise:
        if not noise_files:
            raise ValidationError("--noise-dir with wav files required when noise_prob > 0")
        noise_path = noise_files[rng.randrange(len(noise_files))]
        snr = rng.uniform(acfg.snr_db_min, acfg.snr_db_max)

    if not apply_speed and not apply_noise:
        shutil.copyfile(u.audio, dst)  # bit-exact passthrough
        return rec, str(dst), u.duration_s, u.sample_rate

    buf = read_wav(u.audio)
    if apply_speed:
        buf = speed_perturb(buf, factor)
        rec["speed"] = factor
    if apply_noise:
        noise = read_wav(noise_path)
        buf, info = mix_noise(buf, noise, snr, rng)
        rec["noise"] = str(noise_path)
        rec["snr_db"] = snr
        rec["rescale"] = info["rescale"]
    write_wav(dst, buf)
    return rec, str(dst), buf.duration_s, buf.sample_rate


def cmd_augment(args) -> int:
    acfg = AugmentConfig(
        noise_prob=args.noise_prob,
        snr_db_min=args.snr_min,
        snr_db_max=args.snr_max,
        speed_prob=args.speed_prob,
        speed_factors=tuple(float(x) for x in args.speed_factors.split(",")),
    )
    manifest = read_manifest(args.manifest)
    for u in manifest:
        if u.audio is None:
            raise ValidationError(f"utterance '{u.id}' has no audio")
    noise_files = []
    if args.noise_dir:
        noise_files = sorted(str(p) for p in Path(args.noise_dir).glob("*.wav"))
    if acfg.noise_prob > 0 and not noise_files:
        raise ValidationError("--noise-dir with wav files required when --noise-prob > 0")

    out = _prepare_out(args)
    (out / "audio").mkdir(exist_ok=True)
    utts = list(manifest.utterances)
    ctx = (utts, acfg, args.seed, noise_files, str(out))
    results = _run_ordered(_augment_worker, len(utts), ctx, args.workers)

    entries = []
    reports = []
    for u, (rec, path, dur, rate) in zip(utts, results):
        reports.append(rec)
        entries.append(
            Utterance(
                id=u.id,
                tokens=u.tokens,
                text=u.text,
                audio=path,
                sample_rate=rate,
                duration_s=dur,
                extra=u.extra,
            )
        )
    write_manifest(Manifest(tuple(entries)), out / "manifest.jsonl")
    _write_jsonl(out / "augment_report.jsonl", reports)
    _echo_config(out, "augment", args)
    n_sp = sum(1 for r in reports if r["speed"] is not None)
    n_no = sum(1 for r in reports if r["noise"] is not None)
    print(f"augmented {len(entries)} utterances ({n_sp} speed, {n_no} noise) -> {out}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csmix",
        description="Phrase-mixed code-switched corpus generation and evaluation",
    )
    parser.add_argument("--version", action="version", version=f"csmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global random seed")
    common.add_argument("--workers", type=int, default=1, help="parallel workers")
    common.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])

    p = sub.add_parser("validate", parents=[common], help="validate a manifest")
    p.add_argument("manifest")
    p.add_argument("--check-audio", action="store_true",
                   help="verify audio files exist and match duration/sample_rate")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mix-text", parents=[common],
                       help="generate phrase-mixed transcripts")
    p.add_argument("--manifest", required=True, help="source-language manifest")
    p.add_argument("--target-text", required=True,
                   help="translated sentences, one tokenized line per utterance")
    p.add_argument("--alignments", required=True,
                   help="fast_align style i-j alignment file")
    p.add_argument("--tgt-lang", required=True, choices=["EN", "ZH", "BM", "TA"])
    p.add_argument("--ratio-min", type=float, default=0.10)
    p.add_argument("--ratio-max", type=float, default=0.30)
    p.add_argument("--min-sentence-len", type=int, default=4)
    p.add_argument("--max-phrase-len", type=int, default=7)
    p.add_argument("--keep-words", default=None,
                   help="file of words never replaced, one per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix_text)

    p = sub.add_parser("splice", parents=[common],
                       help="render phrase-mixed audio from mix plans")
    p.add_argument("--manifest", required=True, help="source manifest with audio")
    p.add_argument("--mixed-manifest", required=True, help="output of mix-text")
    p.add_argument("--plans", required=True, help="mix_plans.jsonl from mix-text")
    p.add_argument("--ctm", required=True, help="word timings for the source audio")
    p.add_argument("--donor-manifest", required=True,
                   help="target-language manifest with audio")
    p.add_argument("--donor-ctm", required=True,
                   help="word timings for the donor audio")
    p.add_argument("--norm", default="peak", choices=["peak", "off"])
    p.add_argument("--crossfade-ms", type=float, default=10.0)
    p.add_argument("--silence-ms", type=float, default=0.0)
    p.add_argument("--target-peak-policy", default="median_host_peak",
                   choices=["median_host_peak", "fixed"])
    p.add_argument("--target-peak", type=float, default=0.5)
    p.add_argument("--max-phrase-len", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splice)

    p = sub.add_parser("sentence-mix", parents=[common],
                       help="build inter-sentential test utterances")
    p.add_argument("--manifest-a", required=True)
    p.add_argument("--manifest-b", required=True)
    p.add_argument("--per-output", type=int, default=2,
                   help="sentences per output utterance")
    p.add_argument("--gap-s", type=float, default=0.0,
                   help="silence between sentences (seconds)")
    p.add_argument("--num-outputs", type=int, default=None)
    p.add_argument("--render-audio", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sentence_mix)

    p = sub.add_parser("stats", parents=[common],
                       help="code-switching statistics (CMI, I-Index, M-Index)")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--names", default=None, help="comma-separated dataset labels")
    p.add_argument("--k", type=int, default=2, help="languages in the pair")
    p.add_argument("--json", default=None, help="write machine-readable stats here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("score", parents=[common], help="WER/CER/MER scoring")
    p.add_argument("--ref", required=True, help="reference manifest")
    p.add_argument("--hyp", required=True, help="hypothesis file: utt_id<TAB>text")
    p.add_argument("--metric", default="wer", choices=["wer", "cer", "mer"])
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--keep-punct", action="store_true")
    p.add_argument("--keep-numbers", action="store_true")
    p.add_argument("--per-utt", default=None, help="write per-utterance records here")
    p.add_argument("--trace", action="store_true",
                   help="include alignment traces in per-utterance records")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("augment", parents=[common],
                       help="speed perturbation and noise mixing")
    p.add_argument("--manifest", required=True)
    p.add_argument("--noise-dir", default=None, help="directory of noise wav files")
    p.add_argument("--noise-prob", type=float, default=0.20)
    p.add_argument("--snr-min", type=float, default=10.0)
    p.add_argument("--snr-max", type=float, default=30.0)
    p.add_argument("--speed-prob", type=float, default=0.20)
    p.add_argument("--speed-factors", default="0.9,1.1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
