"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Every subcommand reads and validates all inputs before writing anything;
outputs are written atomically.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats
from .config import RESERVED, RunConfig, read_config
from .errors import DataError, InvariantError

log = logging.getLogger("sslanon")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, [])]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _summary(**values):
    for k, v in values.items():
        print(f"{k}={v}")


def _parallel_map(fn, items, workers):
    """Map with a bounded thread pool; results keep input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- subcommands -------------------------------------------------------------


def cmd_toy(args):
    from .toy import make_toy_corpus

    _require(args, "out_dir")
    corpus = make_toy_corpus(n_speakers=args.speakers, dim=args.dim, seed=args.seed)
    out = Path(args.out_dir)
    formats.write_embeddings(out / "enroll.embd", corpus.enroll)
    formats.write_embeddings(out / "test.embd", corpus.test)
    formats.write_embeddings(out / "pool.embd", corpus.pool.entries)
    formats.atomic_write(out / "trials.txt", formats.format_trials(corpus.trials))
    formats.atomic_write(out / "utt2spk.txt", "".join(f"{u} {s}\n" for u, s in sorted(corpus.utt2spk.items())))
    _summary(out_dir=out, enroll=len(corpus.enroll), test=len(corpus.test), pool=len(corpus.pool), trials=len(corpus.trials))


def cmd_anon_pool(args):
    from .pool import AnonymizationParams, EmbeddingPool, PseudoSpeakerAnonymizer, anonymize_all

    _require(args, "pool", "source", "out")
    pool = EmbeddingPool(formats.load_embeddings(args.pool))
    sources = formats.load_embeddings(args.source)
    if not sources:
        raise DataError(f"{args.source}: no embeddings")
    if sources[0].dim != pool.dim:
        raise DataError(f"source dim {sources[0].dim} differs from pool dim {pool.dim}")
    utt2spk = formats.read_utt2spk(args.utt2spk) if args.utt2spk else {}
    params = AnonymizationParams(args.n_far, args.n_avg, seed=args.seed)
    for g in {s.gender for s in sources}:
        have = len(pool.indices_of_gender(g))
        if have < params.n_far:
            raise DataError(f"pool has {have} {g.label} entries, need n_far={params.n_far}")
    anonymizer = PseudoSpeakerAnonymizer(pool, params, args.mode)
    order = sorted(range(len(sources)), key=lambda i: sources[i].speaker_id)
    ordered = [sources[i] for i in order]
    ids = [s.speaker_id for s in ordered]
    pseudo = anonymize_all(anonymizer, ordered, ids, [utt2spk.get(u, u) for u in ids], workers=args.workers)
    formats.save_embeddings(args.out, pseudo)
    _summary(out=args.out, count=len(pseudo), n_far=params.n_far, n_avg=params.n_avg, mode=args.mode, seed=args.seed)


def cmd_mcadams(args):
    from .dsp import McAdamsConfig, mcadams_anonymize
    from .wavio import read_wav, wav_bytes

    _require(args, "input", "output")
    cfg = McAdamsConfig(args.frame_len, args.hop, args.order, args.max_pole_radius)
    if not args.alpha > 0:
        raise UsageError("mcadams: --alpha must be positive")
    w = read_wav(args.input)
    y = mcadams_anonymize(w, args.alpha, cfg)
    formats.atomic_write(args.output, wav_bytes(y))
    _summary(output=args.output, alpha=args.alpha, samples=len(y))


def cmd_f0(args):
    from .f0 import F0Config, extract_f0
    from .wavio import read_wav

    _require(args, "input")
    inputs = list(args.input)
    if len(inputs) == 1 and args.output is None and args.out_dir is None:
        raise UsageError("f0: give --output for one input or --out-dir")
    if len(inputs) > 1 and args.out_dir is None:
        raise UsageError("f0: several inputs need --out-dir")
    cfg = F0Config(
        f_min=args.f_min, f_max=args.f_max, frame_len=args.frame_len, hop=args.hop,
        nccf_threshold=args.nccf_threshold, dp_transition_cost=args.dp_transition_cost,
    )
    waves = [read_wav(p) for p in inputs]
    tracks = _parallel_map(lambda w: extract_f0(w, cfg), waves, args.workers)
    if args.out_dir is not None:
        targets = [Path(args.out_dir) / (Path(p).stem + ".f0") for p in inputs]
    else:
        targets = [Path(args.output)]
    if len(set(targets)) != len(targets):
        raise DataError("f0: input file stems collide in --out-dir")
    for target, track in zip(targets, tracks):
        formats.atomic_write(target, formats.format_f0_track(track))
        if args.plot:
            from .plotting import plot_f0_track

            plot_f0_track(track, target.with_suffix(".png"), title=target.stem)
    voiced = sum(int(t.voiced.sum()) for t in tracks)
    _summary(files=len(tracks), frames=sum(len(t) for t in tracks), voiced_frames=voiced)


def cmd_soft_train(args):
    from .softunits import SoftTrainConfig, kmeans_fit, quantize, train_soft_head

    _require(args, "features", "out")
    feats = [formats.read_features(p) for p in args.features]
    dims = {f.shape[1] for f in feats}
    if len(dims) != 1:
        raise DataError(f"feature files disagree on dimension: {sorted(dims)}")
    centroids = None
    if args.units:
        if len(args.units) != len(feats):
            raise UsageError("soft-train: give one --units file per --features file")
        targets = [formats.read_units(p) for p in args.units]
        for path, f, t in zip(args.units, feats, targets):
            if len(f) != len(t):
                raise DataError(f"{path}: {len(t)} units for {len(f)} feature frames")
            if t.size and (t.min() < 0 or t.max() >= args.n_units):
                raise DataError(f"{path}: unit ids must lie in [0, {args.n_units})")
    else:
        stacked = np.concatenate(feats)
        if len(stacked) < args.n_units:
            raise DataError(f"k-means needs at least {args.n_units} frames, got {len(stacked)}")
        km = kmeans_fit(stacked, args.n_units, args.kmeans_iters, args.seed)
        centroids = km.centroids
        targets = [quantize(f, centroids) for f in feats]
        log.info("k-means: %d iterations, inertia %.6g", km.n_iter, km.inertia)
    cfg = SoftTrainConfig(
        lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        proj_dim=args.proj_dim, temperature=args.temperature,
    )
    codebook, history = train_soft_head(feats, targets, args.n_units, cfg, centroids)
    formats.atomic_write(args.out, formats.encode_codebook(codebook.projection, codebook.embeddings, codebook.temperature))
    if args.history:
        formats.atomic_write(args.history, "".join(f"{i + 1} {v:.10f}\n" for i, v in enumerate(history)))
    if args.plot:
        from .plotting import plot_loss_history

        plot_loss_history(history, args.plot)
    _summary(out=args.out, frames=sum(len(f) for f in feats), epochs=len(history),
             final_loss=f"{history[-1]:.6f}" if history else "nan")


def cmd_soft_extract(args):
    from .softunits import SoftUnitCodebook, extract_content

    _require(args, "codebook", "features", "out")
    proj, emb, tau = formats.decode_codebook(formats._read_bytes(args.codebook), args.codebook)
    codebook = SoftUnitCodebook(proj, emb, tau)
    feats = formats.read_features(args.features)
    if feats.shape[1] != codebook.input_dim:
        raise DataError(f"{args.features}: feature dim {feats.shape[1]} != codebook input dim {codebook.input_dim}")
    content = extract_content(feats, codebook, raw=args.raw)
    formats.write_features(args.out, content)
    _summary(out=args.out, frames=content.shape[0], dim=content.shape[1], mode="raw" if args.raw else "soft")


def cmd_assemble(args):
    from .assembly import assemble

    _require(args, "content", "f0", "embedding", "out")
    content = formats.read_features(args.content)
    track = formats.read_f0_track(args.f0)
    entries = formats.load_embeddings(args.embedding)
    if args.speaker_id is not None:
        matches = [e for e in entries if e.speaker_id == args.speaker_id]
        if not matches:
            raise DataError(f"{args.embedding}: no entry with id {args.speaker_id!r}")
        spk = matches[0]
    elif len(entries) == 1:
        spk = entries[0]
    else:
        raise UsageError("assemble: store holds several embeddings; pick one with --speaker-id")
    frames = assemble(content, track, spk, mode=args.mode, tolerance=args.tolerance)
    formats.write_features(args.out, frames.frames)
    _summary(out=args.out, frames=len(frames), width=frames.frames.shape[1])


def cmd_losses(args):
    from .dsp import MelConfig
    from .vocloss import LinearDiscriminators, VocLossConfig, adversarial_losses, generator_loss_terms
    from .wavio import read_wav

    _require(args, "real", "fake")
    x, x_hat = read_wav(args.real), read_wav(args.fake)
    if len(x) != len(x_hat):
        raise DataError(f"real ({len(x)}) and fake ({len(x_hat)}) lengths differ")
    mel = MelConfig(args.mel_n_fft, args.mel_hop, args.mel_win, args.mel_n_mels, args.mel_f_min, args.mel_f_max)
    cfg = VocLossConfig(args.lambda_fm, args.lambda_mel, mel, n_sub_discriminators=args.n_sub)
    disc = LinearDiscriminators(len(x), n_sub=cfg.n_sub_discriminators, seed=args.seed)
    real, fake = disc(x), disc(x_hat)
    terms = generator_loss_terms(x, x_hat, real, fake, cfg)
    _, d_loss = adversarial_losses(real.scores, fake.scores)
    text = (
        f"lambda_fm={cfg.lambda_fm!r}\nlambda_mel={cfg.lambda_mel!r}\n"
        f"n_sub_discriminators={cfg.n_sub_discriminators}\n"
        f"adversarial_generator={terms.adversarial!r}\nfeature_matching={terms.feature_matching!r}\n"
        f"mel={terms.mel!r}\ngenerator_total={terms.total!r}\ndiscriminator_total={d_loss!r}\n"
    )
    if args.out:
        formats.atomic_write(args.out, text)
    sys.stdout.write(text)


def cmd_eval(args):
    from .evaluation import IdentityAnonymizer, MetricParams, Scenario, run_scenario
    from .pool import AnonymizationParams, EmbeddingPool, PseudoSpeakerAnonymizer

    _require(args, "scenario", "enroll", "test", "trials", "out_dir")
    scenarios = [Scenario(s.upper()) for s in args.scenario]
    enroll = formats.load_embeddings(args.enroll)
    test = formats.load_embeddings(args.test)
    trials = formats.read_trials(args.trials)
    utt2spk = formats.read_utt2spk(args.utt2spk) if args.utt2spk else None
    refs = hyps = None
    if args.ref_transcripts or args.hyp_transcripts:
        _require(args, "ref_transcripts", "hyp_transcripts")
        refs = formats.read_transcripts(args.ref_transcripts)
        hyps = formats.read_transcripts(args.hyp_transcripts)
    enroll_ids = {e.speaker_id for e in enroll}
    test_ids = {e.speaker_id for e in test}
    for e_id, t_id, _ in trials:
        if e_id not in enroll_ids or t_id not in test_ids:
            raise DataError(f"{args.trials}: trial {e_id} {t_id} references an unknown id")
    pseudo = None
    if any(s in (Scenario.OA, Scenario.AA) for s in scenarios):
        _require(args, "pool")
        params = AnonymizationParams(args.n_far, args.n_avg, seed=args.seed)
        pool = EmbeddingPool(formats.load_embeddings(args.pool))
        for g in {e.gender for e in test}:
            if len(pool.indices_of_gender(g)) < params.n_far:
                raise DataError(f"{args.pool}: fewer than n_far={params.n_far} {g.label} entries")
        pseudo = PseudoSpeakerAnonymizer(pool, params, args.mode)
    resynth = IdentityAnonymizer()
    if args.resynth:
        replaced = {e.speaker_id: e for e in formats.load_embeddings(args.resynth)}
        missing = test_ids - set(replaced)
        if missing:
            raise DataError(f"{args.resynth}: no resynthesized embedding for {sorted(missing)[0]!r}")
        resynth = lambda emb, utt, spk=None, salt="": replaced[utt]  # noqa: E731
    metric = MetricParams(args.c_fa, args.c_miss, args.p_target)
    results = []
    for sc in scenarios:
        anonymizer = {Scenario.OO: None, Scenario.OR: resynth}.get(sc, pseudo)
        report, scores = run_scenario(
            sc, enroll, test, trials, anonymizer, refs=refs, hyps=hyps, error_unit=args.unit,
            seed=args.seed, enroll_policy=args.enroll_policy, utt2spk=utt2spk, metric_params=metric,
        )
        report.params = {"seed": args.seed, "n_far": args.n_far, "n_avg": args.n_avg, "mode": args.mode,
                         "enroll_policy": args.enroll_policy}
        results.append((report, scores))
    out = Path(args.out_dir)
    for report, scores in results:
        stem = out / report.scenario
        formats.atomic_write(stem.with_suffix(".txt"), report.to_text())
        formats.atomic_write(stem.with_suffix(".json"), report.to_json())
        formats.atomic_write(stem.with_suffix(".scores"), formats.format_scores(scores))
        if not args.no_plots:
            from .plotting import plot_scores

            plot_scores(scores, out / f"{report.scenario}_scores.png", title=f"{report.scenario}  EER {report.eer:.2f}%")
        sys.stdout.write(report.to_text())


# -- parser ------------------------------------------------------------------

COMMANDS = {
    "toy": cmd_toy,
    "anon-pool": cmd_anon_pool,
    "mcadams": cmd_mcadams,
    "f0": cmd_f0,
    "soft-train": cmd_soft_train,
    "soft-extract": cmd_soft_extract,
    "assemble": cmd_assemble,
    "losses": cmd_losses,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags override it")
    common.add_argument("--seed", type=_nonneg_int, default=0)
    common.add_argument("-v", "--verbosity", default="info", choices=["debug", "info", "warning", "error"])
    common.add_argument("--dump-config", metavar="PATH", help="write the effective configuration and continue")

    parser = _Parser(prog="sslanon", description="Speaker anonymization and privacy evaluation tools.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("toy", parents=[common], help="write a synthetic evaluation corpus")
    p.add_argument("--out-dir")
    p.add_argument("--speakers", type=_positive_int, default=20)
    p.add_argument("--dim", type=_positive_int, default=32)

    p = sub.add_parser("anon-pool", parents=[common], help="pseudo-speaker embeddings from a pool")
    p.add_argument("--pool")
    p.add_argument("--source")
    p.add_argument("--out")
    p.add_argument("--n-far", type=_positive_int, default=200)
    p.add_argument("--n-avg", type=_positive_int, default=100)
    p.add_argument("--mode", choices=["per-utterance", "per-speaker"], default="per-utterance")
    p.add_argument("--utt2spk")
    p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("mcadams", parents=[common], help="McAdams-coefficient WAV anonymization")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--frame-len", type=_positive_int, default=400)
    p.add_argument("--hop", type=_positive_int, default=160)
    p.add_argument("--order", type=_positive_int, default=20)
    p.add_argument("--max-pole-radius", type=float, default=0.998)

    p = sub.add_parser("f0", parents=[common], help="F0 tracks from WAV files")
    p.add_argument("--input", nargs="+")
    p.add_argument("--output")
    p.add_argument("--out-dir")
    p.add_argument("--f-min", type=float, default=60.0)
    p.add_argument("--f-max", type=float, default=400.0)
    p.add_argument("--frame-len", type=_positive_int, default=400)
    p.add_argument("--hop", type=_positive_int, default=160)
    p.add_argument("--nccf-threshold", type=float, default=0.3)
    p.add_argument("--dp-transition-cost", type=float, default=1.0)
    p.add_argument("--plot", action="store_true", help="also write a PNG per track")
    p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("soft-train", parents=[common], help="train the soft unit head on feature files")
    p.add_argument("--features", nargs="+")
    p.add_argument("--units", nargs="+", help="unit files; k-means targets are computed when omitted")
    p.add_argument("--out")
    p.add_argument("--n-units", type=_positive_int, default=200)
    p.add_argument("--proj-dim", type=_positive_int, default=256)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=_nonneg_int, default=50)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--kmeans-iters", type=_positive_int, default=100)
    p.add_argument("--history", help="write per-epoch mean loss")
    p.add_argument("--plot", help="write the loss curve PNG here")

    p = sub.add_parser("soft-extract", parents=[common], help="soft content frames from features")
    p.add_argument("--codebook")
    p.add_argument("--features")
    p.add_argument("--out")
    p.add_argument("--raw", action="store_true", help="export projected vectors instead of distributions")

    p = sub.add_parser("assemble", parents=[common], help="concatenate content, F0 and speaker streams")
    p.add_argument("--content")
    p.add_argument("--f0")
    p.add_argument("--embedding")
    p.add_argument("--speaker-id")
    p.add_argument("--mode", choices=["repeat", "linear"], default="repeat")
    p.add_argument("--tolerance", type=_nonneg_int, default=2)
    p.add_argument("--out")

    p = sub.add_parser("losses", parents=[common], help="vocoder losses for a real/generated WAV pair")
    p.add_argument("--real")
    p.add_argument("--fake")
    p.add_argument("--out")
    p.add_argument("--lambda-fm", type=float, default=2.0)
    p.add_argument("--lambda-mel", type=float, default=45.0)
    p.add_argument("--n-sub", type=_positive_int, default=8)
    p.add_argument("--mel-n-fft", type=_positive_int, default=1024)
    p.add_argument("--mel-hop", type=_positive_int, default=256)
    p.add_argument("--mel-win", type=_positive_int, default=1024)
    p.add_argument("--mel-n-mels", type=_positive_int, default=80)
    p.add_argument("--mel-f-min", type=float, default=0.0)
    p.add_argument("--mel-f-max", type=float, default=8000.0)

    p = sub.add_parser("eval", parents=[common], help="run privacy/utility scenarios")
    p.add_argument("--scenario", nargs="+", choices=["OO", "OA", "AA", "OR", "oo", "oa", "aa", "or"])
    p.add_argument("--enroll")
    p.add_argument("--test")
    p.add_argument("--trials")
    p.add_argument("--pool")
    p.add_argument("--resynth", help="test-side embeddings of resynthesized audio for OR")
    p.add_argument("--n-far", type=_positive_int, default=200)
    p.add_argument("--n-avg", type=_positive_int, default=100)
    p.add_argument("--mode", choices=["per-utterance", "per-speaker"], default="per-utterance")
    p.add_argument("--enroll-policy", choices=["independent", "shared"], default="independent")
    p.add_argument("--utt2spk")
    p.add_argument("--ref-transcripts")
    p.add_argument("--hyp-transcripts")
    p.add_argument("--unit", choices=["word", "char"], default="word")
    p.add_argument("--c-fa", type=float, default=1.0)
    p.add_argument("--c-miss", type=float, default=1.0)
    p.add_argument("--p-target", type=float, default=0.01)
    p.add_argument("--out-dir")
    p.add_argument("--no-plots", action="store_true")
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise InvariantError("parser has no subcommands")


def _config_defaults(sub: argparse.ArgumentParser, values: dict) -> dict:
    """Translate config text values into parser defaults."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "dump_config")}
    out = {}
    for key, raw in values.items():
        if key not in actions:
            raise UsageError(f"config key {key!r} is not an option of {sub.prog}")
        action = actions[key]
        if action.choices is not None and action.nargs not in ("+", "*") and raw not in action.choices:
            raise UsageError(f"config key {key!r}: {raw!r} is not one of {sorted(action.choices)}")
        if isinstance(action, argparse._StoreTrueAction):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")
            out[key] = low in ("true", "1", "yes")
        elif action.nargs in ("+", "*"):
            items = [v.strip() for v in raw.split(",") if v.strip()]
            out[key] = [action.type(v) if action.type else v for v in items]
        else:
            # argparse applies ``type`` to string defaults.
            out[key] = raw
    return out


def effective_config(args, sub) -> RunConfig:
    params = {}
    for action in sub._actions:
        dest = action.dest
        if dest in ("help", "config", "dump_config", *RESERVED):
            continue
        value = getattr(args, dest, None)
        if value is None:
            continue
        if isinstance(value, list):
            params[dest] = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            params[dest] = "true" if value else "false"
        else:
            params[dest] = str(value)
    return RunConfig(args.command, params, args.seed, args.verbosity)


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    sub = _subparser(parser, args.command)
    if args.config:
        values = read_config(args.config)
        cmd = values.pop("command", args.command)
        if cmd != args.command:
            raise UsageError(f"config is for command {cmd!r}, not {args.command!r}")
        sub.set_defaults(**_config_defaults(sub, values))
        args = parser.parse_args(argv)
    return args, sub


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, sub = parse(argv)
        logging.basicConfig(level=args.verbosity.upper(), format="%(levelname)s %(name)s: %(message)s")
        logging.getLogger("matplotlib").setLevel(logging.WARNING)
        cfg_text = effective_config(args, sub).to_text()
        COMMANDS[args.command](args)
        # Written last so a failed run leaves no files behind.
        if args.dump_config:
            formats.atomic_write(args.dump_config, cfg_text)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
