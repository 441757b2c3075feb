"""Command-line entry point.

Subcommands: verify-dct, extract, train, score, metrics, synth. Output is
stable key=value text on stdout; per-file problems go to stderr and flip
the exit code. FREQATTN_SEED in the environment overrides the config seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dct
from . import features as feats
from . import metrics as mt
from . import speakernet as sn
from .errors import ConfigError, DimensionError, FormatError, NumericError, ParseError

_KNOWN_ERRORS = (ConfigError, DimensionError, FormatError, NumericError,
                 ParseError, FileNotFoundError, IndexError, ValueError)


def cmd_verify_dct(args) -> int:
    results = dct.run_verification(perturb=args.perturb)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.detail}")
        ok = ok and r.passed
    return 0 if ok else 1


def cmd_extract(args) -> int:
    cfg = cfgmod.load_config(args.config, env=os.environ) if args.config \
        else cfgmod.RunConfig()
    mel_cfg = cfgmod.to_mel_config(cfg)
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wavs = sorted(in_dir.glob("*.wav"))
    if not wavs:
        print(f"error: no .wav files in {in_dir}", file=sys.stderr)
        return 1
    failures = 0
    for wav in wavs:
        try:
            fm = feats.logmel(feats.read_wav(wav), mel_cfg)
            if cfg.features.mvn:
                fm = feats.mvn(fm)
            feats.write_feat(out_dir / (wav.stem + ".feat"), fm)
        except _KNOWN_ERRORS as exc:
            print(f"error: {exc}", file=sys.stderr)
            failures += 1
    print(f"extracted={len(wavs) - failures} failed={failures}")
    return 1 if failures else 0


def _load_train_examples(cfg):
    list_path = Path(cfg.paths.train_list)
    base = list_path.parent
    labels = []
    files = []
    for lineno, line in enumerate(list_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{list_path}: line {lineno}: expected '<speaker> <file>'")
        labels.append(parts[0])
        files.append(base / parts[1])
    if not labels:
        raise ConfigError(f"{list_path}: empty training list")
    speakers = sorted(set(labels))
    index = {s: i for i, s in enumerate(speakers)}
    examples = []
    for label, path in zip(labels, files):
        if not path.exists():
            raise ConfigError(f"training feature file missing: {path}")
        examples.append((index[label], feats.read_feat(path)))
    return examples, speakers


def cmd_train(args) -> int:
    cfg = cfgmod.load_config(args.config, env=os.environ)
    cfgmod.validate_config(cfg, check_paths=True)
    if not cfg.paths.train_list:
        raise ConfigError("paths.train_list is required for training")
    examples, speakers = _load_train_examples(cfg)
    if cfg.network.num_speakers == 0:
        cfg.network.num_speakers = len(speakers)
    elif cfg.network.num_speakers != len(speakers):
        raise ConfigError(
            f"config says {cfg.network.num_speakers} speakers, "
            f"training list has {len(speakers)}")

    rng = np.random.default_rng(cfg.seed)
    net = sn.SpeakerNet(cfgmod.to_network_config(cfg), rng)
    head = sn.AamHead(cfg.network.num_speakers, cfg.network.embedding_dim,
                      margin=cfg.loss.margin, scale=cfg.loss.scale, rng=rng)
    opts = cfgmod.to_train_options(cfg)
    print(f"seed={cfg.seed} speakers={len(speakers)} examples={len(examples)} "
          f"variant={cfg.attention.variant}")
    sn.train(net, head, examples, opts, rng=rng, log=print)
    sn.save_checkpoint(args.out, cfgmod.serialize_config(cfg),
                       net.parameters() + head.parameters())
    print(f"checkpoint={args.out}")
    return 0


def _load_model(checkpoint_path):
    cfg_text, entries = sn.load_checkpoint(checkpoint_path)
    cfg = cfgmod.parse_config(cfg_text)
    rng = np.random.default_rng(cfg.seed)
    net = sn.SpeakerNet(cfgmod.to_network_config(cfg), rng)
    head = sn.AamHead(cfg.network.num_speakers, cfg.network.embedding_dim,
                      margin=cfg.loss.margin, scale=cfg.loss.scale, rng=rng)
    sn.restore_parameters(net.parameters() + head.parameters(), entries)
    return cfg, net


def _feature_path(features_dir: Path, trial_id: str) -> Path:
    direct = features_dir / trial_id
    if direct.exists():
        return direct
    alt = features_dir / (Path(trial_id).stem + ".feat")
    if alt.exists():
        return alt
    raise FileNotFoundError(f"no feature file for trial id {trial_id!r} "
                            f"under {features_dir}")


def cmd_score(args) -> int:
    _, net = _load_model(args.checkpoint)
    trials = mt.parse_trials(Path(args.trials).read_text())
    if not trials:
        raise ConfigError(f"{args.trials}: empty trial list")
    features_dir = Path(args.features)
    embeddings = {}
    for trial in trials:
        for tid in (trial.enroll, trial.test):
            if tid not in embeddings:
                fm = feats.read_feat(_feature_path(features_dir, tid))
                embeddings[tid] = sn.forward_embed(net, fm.values[None, :, :])
    for trial in trials:
        trial.score = mt.cosine_score(embeddings[trial.enroll], embeddings[trial.test])
    Path(args.out).write_text(mt.format_scores(trials))
    print(f"scored={len(trials)} out={args.out}")
    return 0


def cmd_metrics(args) -> int:
    trials = mt.parse_scores(Path(args.scores).read_text())
    result = mt.evaluate_trials(trials, p_target=0.05)
    print(f"EER={result.eer * 100.0:.6f} minDCF={result.min_dcf:.6f}")
    return 0


def cmd_synth(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("FREQATTN_SEED", 7))
    if args.test_utts >= args.utts:
        raise ConfigError("--test-utts must be smaller than --utts")
    out = Path(args.out)
    feat_dir = out / "feats"
    feat_dir.mkdir(parents=True, exist_ok=True)

    data = feats.synth_dataset(args.speakers, args.utts, seed)
    train_lines = []
    test_ids = {}
    for utt in data:
        fm = feats.mvn(utt.features)
        name = f"{fm.source}.feat"
        feats.write_feat(feat_dir / name, fm)
        utt_index = int(fm.source.split("_utt")[1])
        if utt_index < args.utts - args.test_utts:
            train_lines.append(f"spk{utt.speaker:03d} feats/{name}")
        else:
            test_ids.setdefault(utt.speaker, []).append(name)
    (out / "train.txt").write_text("\n".join(train_lines) + "\n")

    target_pairs = []
    for spk in sorted(test_ids):
        ids = test_ids[spk]
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                target_pairs.append((ids[i], ids[j]))
    cross_pairs = []
    speakers = sorted(test_ids)
    for si in range(len(speakers)):
        for sj in range(si + 1, len(speakers)):
            for a in test_ids[speakers[si]]:
                for b in test_ids[speakers[sj]]:
                    cross_pairs.append((a, b))

    rng = np.random.default_rng(seed + 1)
    n_target = min(args.trials // 2, len(target_pairs))
    n_non = min(args.trials - n_target, len(cross_pairs))
    if n_target < len(target_pairs):
        keep = rng.choice(len(target_pairs), n_target, replace=False)
        target_pairs = [target_pairs[i] for i in sorted(keep)]
    keep = rng.choice(len(cross_pairs), n_non, replace=False)
    cross_pairs = [cross_pairs[i] for i in sorted(keep)]

    lines = [f"1 {a} {b}" for a, b in target_pairs]
    lines += [f"0 {a} {b}" for a, b in cross_pairs]
    (out / "trials.txt").write_text("\n".join(lines) + "\n")
    print(f"speakers={args.speakers} utterances={len(data)} "
          f"trials={len(lines)} out={out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqattn",
        description="DCT-based multi-frequency channel attention: verification, "
                    "feature extraction, training, scoring, and metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-dct", help="check DCT basis properties")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_verify_dct)

    p = sub.add_parser("extract", help="WAV directory -> FEAT directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train", help="train a speaker embedding network")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score", help="score trials with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("metrics", help="EER/minDCF from a scores file")
    p.add_argument("--scores", required=True)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("synth", help="emit a synthetic dataset and trial list")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--utts", type=int, default=20)
    p.add_argument("--test-utts", type=int, default=5, dest="test_utts")
    p.add_argument("--trials", type=int, default=400)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _KNOWN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
