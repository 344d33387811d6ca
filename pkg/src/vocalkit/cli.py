"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 2 contract violation (bad inputs or preconditions),
3 I/O error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import audio as audio_mod
from . import featureio, feedback, htpr, plotting, rulesignal, scorer
from . import features as features_mod
from .config import ConfigError, load_config
from .sessions import SessionStore
from .server import create_app, load_tier_file

EXIT_CONTRACT = 2
EXIT_IO = 3

_CONTRACT_ERRORS = (
    ConfigError,
    ValueError,
    KeyError,
    audio_mod.AudioError,
    rulesignal.RuleSignalError,
    htpr.HtprError,
    feedback.FeedbackError,
)


def _run(fn):
    try:
        fn()
    except _CONTRACT_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONTRACT)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(EXIT_IO)


def _common(f):
    f = click.option("--config", "config_path", type=click.Path(), default=None,
                     help="YAML config file overlaying the defaults.")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--out", "out_path", type=click.Path(), required=True)(f)
    return f


@click.group()
def main():
    """Singing assessment toolkit."""


@main.command()
@click.argument("wavs", nargs=-1, type=click.Path(exists=True), required=True)
@click.option("--json-cache", is_flag=True, help="Write JSON debug caches instead of binary.")
@_common
def features(wavs, json_cache, config_path, seed, out_path):
    """Extract and cache pitch contour, onsets, and mel matrix per clip."""

    def body():
        cfg = load_config(config_path)
        out_dir = Path(out_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        for wav in wavs:
            clip = audio_mod.load_audio(wav, cfg["audio"]["target_rate_hz"])
            contour = features_mod.extract_f0(clip, cfg["features"]["fmin_hz"], cfg["features"]["fmax_hz"])
            onsets = features_mod.detect_onsets(clip)
            mel = features_mod.mel_features(clip, cfg["features"]["n_mels"])
            suffix = ".json" if json_cache else ".vkfc"
            featureio.save_features(out_dir / (clip.id + suffix), clip.id, contour, onsets, mel)
            click.echo(f"{clip.id}: {len(contour.f0_cents)} frames, {len(onsets.onset_times_s)} onsets")

    _run(body)


@main.command()
@click.option("--manifest", type=click.Path(exists=True), required=True,
              help="CSV of user_path,ref_path pairs.")
@click.option("--no-figures", is_flag=True, help="Skip rendering report figures.")
@_common
def rulescore(manifest, no_figures, config_path, seed, out_path):
    """Score user takes against reference vocals; write JSONL + figures."""

    def body():
        cfg = load_config(config_path)
        rs_cfg = rulesignal.RuleSignalConfig(
            fmin_hz=cfg["features"]["fmin_hz"],
            fmax_hz=cfg["features"]["fmax_hz"],
            n_mels=cfg["features"]["n_mels"],
            rhythm_tol_s=cfg["rulesignal"]["rhythm_tol_s"],
            weights=(
                cfg["rulesignal"]["weight_pitch"],
                cfg["rulesignal"]["weight_rhythm"],
                cfg["rulesignal"]["weight_timbre"],
            ),
            band_frames=cfg["rulesignal"]["band_frames"],
        )
        out_dir = Path(out_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        render = cfg["rulesignal"]["render_figures"] and not no_figures
        with open(manifest, newline="") as fh, open(out_dir / "reports.jsonl", "w") as out:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "user_path":
                    continue
                user_clip = audio_mod.load_audio(row[0], cfg["audio"]["target_rate_hz"])
                ref_clip = audio_mod.load_audio(row[1], cfg["audio"]["target_rate_hz"])
                report = rulesignal.rulesignal_report(user_clip, ref_clip, rs_cfg)
                out.write(report.to_json() + "\n")
                if render:
                    plotting.render_report_figure(
                        report,
                        features_mod.extract_f0(user_clip, rs_cfg.fmin_hz, rs_cfg.fmax_hz),
                        features_mod.extract_f0(ref_clip, rs_cfg.fmin_hz, rs_cfg.fmax_hz),
                        features_mod.detect_onsets(user_clip),
                        features_mod.detect_onsets(ref_clip),
                        out_dir / f"{report.clip_id}.png",
                    )
                click.echo(f"{report.clip_id}: combined {report.combined:.1f}")

    _run(body)


@main.command()
@click.option("--reports", "reports_path", type=click.Path(exists=True), required=True,
              help="JSONL of score reports.")
@click.option("--fraction", type=float, default=0.10, show_default=True)
@click.option("--per-song", "groups_path", type=click.Path(exists=True), default=None,
              help="CSV of clip_id,song_id; screen within each song instead of globally.")
@_common
def prescreen(reports_path, fraction, groups_path, config_path, seed, out_path):
    """Keep the top fraction of reports by combined score."""

    def body():
        reports = [
            rulesignal.RuleSignalReport.from_json(line)
            for line in Path(reports_path).read_text().splitlines()
            if line.strip()
        ]
        if groups_path:
            groups: dict[str, list] = {}
            song_of = {}
            with open(groups_path, newline="") as fh:
                for row in csv.reader(fh):
                    if row and row[0] != "clip_id":
                        song_of[row[0]] = row[1]
            for rep in reports:
                groups.setdefault(song_of.get(rep.clip_id, ""), []).append(rep)
            kept = [cid for grp in groups.values() for cid in rulesignal.prescreen(grp, fraction)]
        else:
            kept = rulesignal.prescreen(reports, fraction)
        Path(out_path).write_text("\n".join(kept) + "\n")
        click.echo(f"kept {len(kept)} of {len(reports)}")

    _run(body)


def _embed_manifest_clips(rows, cfg, encoder_params):
    dataset = {}
    for clip_path, labels in rows:
        clip = audio_mod.load_audio(clip_path, cfg["audio"]["target_rate_hz"])
        mel = features_mod.mel_features(clip, cfg["features"]["n_mels"])
        windows = features_mod.window_features(mel, cfg["features"]["window_s"], cfg["features"]["stride_s"])
        seq = scorer.encode_windows(windows, "mel-proj", encoder_params, clip.id)
        dataset[clip.id] = (seq, labels)
    return dataset


@main.command()
@click.option("--manifest", type=click.Path(exists=True), required=True,
              help="CSV of clip_path,breath,timbre,emotion,technique with 1-5 labels.")
@click.option("--kind", type=click.Choice(["mlp", "rnn", "transformer"]), default="mlp",
              show_default=True)
@_common
def train(manifest, kind, config_path, seed, out_path):
    """Train one head per dimension and write the model registry."""

    def body():
        cfg = load_config(config_path)
        rows = []
        with open(manifest, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] in ("clip_path",) or row[0].startswith("#"):
                    continue
                rows.append((row[0], dict(zip(scorer.DIMENSIONS, map(int, row[1:5])))))
        if not rows:
            raise ValueError("empty training manifest")
        dim = cfg["scorer"]["embedding_dim"]
        enc_params = scorer.make_encoder_params("mel-proj", cfg["features"]["n_mels"], dim, seed)
        dataset = _embed_manifest_clips(rows, cfg, enc_params)
        opt = scorer.OptimizerConfig(
            learning_rate=cfg["scorer"]["learning_rate"],
            weight_decay=cfg["scorer"]["weight_decay"],
            batch_size=cfg["scorer"]["batch_size"],
            max_epochs=cfg["scorer"]["max_epochs"],
            patience=cfg["scorer"]["patience"],
            val_fraction=cfg["scorer"]["val_fraction"],
            seed=seed,
        )
        head_cfg = scorer.HeadConfig(
            kind=kind, input_dim=dim,
            hidden_dim=cfg["scorer"]["hidden_dim"], layers=cfg["scorer"]["layers"],
        )
        models = {}
        from .scorer.registry import DimensionModel, DimensionRegistry

        for dimension in scorer.DIMENSIONS:
            pairs = [(seq, labels[dimension]) for seq, labels in dataset.values()]
            head = scorer.train_head(pairs, head_cfg, opt)
            models[dimension] = DimensionModel("mel-proj", enc_params, head)
            click.echo(f"{dimension}: {head.train_meta['epochs']} epochs, "
                       f"final loss {head.train_meta['final_loss']:.4f}")
        registry = DimensionRegistry(
            models=models,
            n_mels=cfg["features"]["n_mels"],
            window_s=cfg["features"]["window_s"],
            stride_s=cfg["features"]["stride_s"],
        )
        scorer.save_registry(out_path, registry)
        click.echo(f"wrote {out_path}")

    _run(body)


@main.command()
@click.argument("wavs", nargs=-1, type=click.Path(exists=True), required=True)
@click.option("--registry", "registry_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["fullsong", "clip30"]), default="fullsong",
              show_default=True)
@_common
def infer(wavs, registry_path, mode, config_path, seed, out_path):
    """Score full songs across the four dimensions; write JSONL."""

    def body():
        cfg = load_config(config_path)
        registry = scorer.load_registry(registry_path)
        with open(out_path, "w") as out:
            for wav in wavs:
                clip = audio_mod.load_audio(wav, cfg["audio"]["target_rate_hz"])
                scores = scorer.infer_song(clip, registry, mode)
                out.write(json.dumps(scores.to_dict()) + "\n")
                summary = ", ".join(f"{d}={scores.expected[d]:.2f}" for d in scorer.DIMENSIONS)
                click.echo(f"{clip.id}: {summary}")

    _run(body)


@main.command()
@click.option("--scores", "scores_path", type=click.Path(exists=True), required=True,
              help="JSONL written by `infer`.")
@click.option("--dimension", type=click.Choice(list(scorer.DIMENSIONS) + ["mean"]),
              default="mean", show_default=True)
@_common
def tier(scores_path, dimension, config_path, seed, out_path):
    """Assign High/Medium/Low tiers from expected scores."""

    def body():
        keys = {}
        for line in Path(scores_path).read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            exp = obj["expected"]
            keys[obj["clip_id"]] = (
                float(np.mean(list(exp.values()))) if dimension == "mean" else exp[dimension]
            )
        assignment = htpr.assign_tiers(keys)
        Path(out_path).write_text(
            json.dumps({"tiers": assignment.tiers, "ranking_key": assignment.ranking_key}, indent=2)
        )
        sizes = {t: len(assignment.members(t)) for t in htpr.TIERS}
        click.echo(f"tiered {len(keys)} clips: {sizes}")

    _run(body)


@main.group(name="htpr")
def htpr_group():
    """Tiered perceptual ranking sessions."""


@htpr_group.command(name="create")
@click.option("--tiers", "tiers_path", type=click.Path(exists=True), required=True)
@click.option("--n-triplets", type=int, default=50, show_default=True)
@_common
def htpr_create(tiers_path, n_triplets, config_path, seed, out_path):
    """Create (idempotently) a judging session under --out."""

    def body():
        store = SessionStore(out_path)
        session = store.create(load_tier_file(tiers_path), n_triplets, seed)
        click.echo(session.id)

    _run(body)


@htpr_group.command(name="serve")
@click.option("--sessions", "sessions_root", type=click.Path(), required=True)
@click.option("--audio", "audio_dir", type=click.Path(exists=True), required=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory with the built judging UI to serve at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
def htpr_serve(sessions_root, audio_dir, static_dir, host, port):
    """Serve the judging HTTP API (and optionally the UI)."""

    def body():
        import uvicorn

        app = create_app(sessions_root, audio_dir, static_dir=static_dir)
        uvicorn.run(app, host=host, port=port, log_level="warning")

    _run(body)


@htpr_group.command(name="score")
@click.option("--sessions", "sessions_root", type=click.Path(exists=True), required=True)
@click.option("--session-id", required=True)
def htpr_score_cmd(sessions_root, session_id):
    """Print the current consistency score of a session."""

    def body():
        session = SessionStore(sessions_root).load(session_id)
        score, ci, judged = htpr.htpr_score(session)
        click.echo(json.dumps({"score": score, "ci95": list(ci), "judged": judged}))

    _run(body)


@main.command()
@click.option("--a", "a_path", type=click.Path(exists=True), required=True,
              help="Scores of annotator A, one integer per line.")
@click.option("--b", "b_path", type=click.Path(exists=True), required=True)
@_common
def agreement(a_path, b_path, config_path, seed, out_path):
    """Exact and within-one agreement between two score lists."""

    def body():
        a = [int(x) for x in Path(a_path).read_text().split()]
        b = [int(x) for x in Path(b_path).read_text().split()]
        exact, within_one = htpr.agreement_stats(a, b)
        result = {"exact": exact, "within_one": within_one, "n": len(a)}
        Path(out_path).write_text(json.dumps(result) + "\n")
        click.echo(json.dumps(result))

    _run(body)


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True), required=True,
              help="JSONL annotation records of one annotator.")
@_common
def audit(records_path, config_path, seed, out_path):
    """Audit one annotator's scores against the forced 1:1:1:1:1 target."""

    def body():
        records = [
            htpr.AnnotationRecord(
                clip_id=o["clip_id"],
                annotator_id=o["annotator_id"],
                scores=o["scores"],
                critiques=o.get("critiques", {}),
            )
            for o in map(json.loads, Path(records_path).read_text().splitlines())
        ]
        counts, compliant = htpr.audit_forced_distribution(records)
        result = {"counts": counts, "compliant": compliant}
        Path(out_path).write_text(json.dumps(result) + "\n")
        click.echo(json.dumps(result))

    _run(body)


@main.command(name="feedback")
@click.argument("wav", type=click.Path(exists=True))
@click.option("--summarize", "endpoint", default=None,
              help="External summarizer endpoint; omitted = no summary.")
@_common
def feedback_cmd(wav, endpoint, config_path, seed, out_path):
    """Per-segment critiques aggregated into a diagnostic document."""

    def body():
        cfg = load_config(config_path)
        clip = audio_mod.load_audio(wav, cfg["audio"]["target_rate_hz"])
        segment_s = cfg["feedback"]["segment_s"]
        critiques = []
        for idx, segment in enumerate(audio_mod.segment_clips(clip, segment_s)):
            feats = (
                features_mod.extract_f0(segment, cfg["features"]["fmin_hz"], cfg["features"]["fmax_hz"]),
                features_mod.detect_onsets(segment),
                features_mod.mel_features(segment, cfg["features"]["n_mels"]),
            )
            critiques.append(
                feedback.critique_clip(segment, feats, cfg["feedback"]["critic_id"], idx)
            )
        doc = feedback.aggregate_critiques(critiques, segment_s)
        if endpoint:
            result = feedback.summarize_external(doc, endpoint)
            doc.summary = result.text
            if result.degraded:
                click.echo("summarizer unreachable; using plain concatenation", err=True)
        out_dir = Path(out_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{clip.id}.diagnostic.json").write_text(
            json.dumps(feedback.build_summary_request(doc) | {"summary": doc.summary}, indent=2)
        )
        (out_dir / f"{clip.id}.diagnostic.txt").write_text(doc.plain_text() + "\n")
        click.echo(f"wrote diagnostics for {clip.id} ({len(critiques)} segments)")

    _run(body)


if __name__ == "__main__":
    main()
