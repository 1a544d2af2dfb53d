"""Command-line surface.

Every command is a pure function of its inputs, flags, and seed: rerunning
with the same arguments produces byte-identical outputs. Data goes to files
or stdout; diagnostics go to stderr. Exit codes: 0 success, 1 usage error,
2 data error. `--config <path>` supplies a JSON object whose keys mirror the
command's flags (explicit flags win).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .ablation import (
    CORRUPTION_KINDS,
    TSF_MODES,
    HarnessConfig,
    build_inputs,
    build_query,
    corrupt_teacher,
    render_results_csv,
    run_ablation,
    teacher_crops,
)
from .costmodel import (
    DEFAULT_COST_TABLE,
    Scenario,
    recommend_tracking_prompts,
    total_overhead,
)
from .features import read_feature_matrix, write_feature_matrix
from .geometry import iou
from .head import TrainConfig, TrainScene, load_head, run_head, save_head, train
from .ioutil import FormatError, dump_json, fmt_float
from .masks import read_mask_video, write_mask_video
from .metrics import (
    MetricReport,
    oracle_recall,
    read_proposals,
    render_report_csv,
    sequence_eval,
    write_proposals,
)
from .selection import ProjectionMap, build_joint_features, emit_tokens, select_representatives
from .synth import SceneConfig, gen_scenes, query_projection, target_masks
from .trajectories import (
    QA_TEMPLATES,
    corrupt_dropout,
    corrupt_id_switch,
    corrupt_jitter,
    read_trajectories,
    render_qa,
    write_qa_manifest,
    write_trajectories,
)


class UsageError(Exception):
    """A bad invocation discovered after parsing (e.g. a missing required flag)."""


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# flag/config plumbing

SCENE_DEFAULTS = {
    "frames": 12,
    "grid": 16,
    "levels": 2,
    "dim": 8,
    "objects": 3,
    "noise": 0.5,
    "distractors": 2,
    "prop_center_jitter": 0.02,
    "prop_size_jitter": 0.04,
    "size_lo": 0.25,
    "size_hi": 0.45,
}

HARNESS_DEFAULTS = {
    **SCENE_DEFAULTS,
    "roi_size": 2,
    "nms_threshold": 0.7,
    "clusters": 4,
    "spatial_weight": 0.25,
    "feature_scale": 1.0,
    "lambda_cls": 3.0,
    "lambda_box": 0.25,
    "top_m": 20,
    "tau": 0.5,
}


def _add_flag(parser, name, kind, help_text):
    flag = "--" + name.replace("_", "-")
    if kind is bool:
        parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=None, help=help_text)
    else:
        parser.add_argument(flag, type=kind, default=None, help=help_text)


def _merged(args, defaults: dict) -> dict:
    """Resolve values as defaults < config file < explicit flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"config {config_path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise FormatError(f"config {config_path}: top level must be a JSON object")
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise FormatError(f"config {config_path}: unknown keys {unknown}")
        merged.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require(merged: dict, key: str) -> object:
    value = merged.get(key)
    if value is None:
        raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return value


def _harness_config(m: dict, train_count: int, eval_count: int) -> HarnessConfig:
    return HarnessConfig(
        seed=int(m["seed"]),
        train_count=train_count,
        eval_count=eval_count,
        frames=int(m["frames"]),
        grid=int(m["grid"]),
        levels=int(m["levels"]),
        dim=int(m["dim"]),
        n_objects=int(m["objects"]),
        noise=float(m["noise"]),
        distractors=int(m["distractors"]),
        prop_center_jitter=float(m["prop_center_jitter"]),
        prop_size_jitter=float(m["prop_size_jitter"]),
        size_lo=float(m["size_lo"]),
        size_hi=float(m["size_hi"]),
        roi_size=int(m["roi_size"]),
        nms_threshold=float(m["nms_threshold"]),
        clusters=int(m["clusters"]),
        spatial_weight=float(m["spatial_weight"]),
        feature_scale=float(m["feature_scale"]),
        steps=int(m.get("steps", 2000)),
        lr=float(m.get("lr", 0.05)),
        hidden=None if m.get("hidden") is None else int(m["hidden"]),
        lambda_cls=float(m["lambda_cls"]),
        lambda_box=float(m["lambda_box"]),
        top_m=int(m["top_m"]),
        tau=float(m["tau"]),
        recall_topk=int(m.get("recall_topk", 10)),
    )


# ---------------------------------------------------------------------------
# synth gen

SYNTH_DEFAULTS = {
    "seed": 7,
    "count": 10,
    **SCENE_DEFAULTS,
    "mask_size": 64,
    "stream": 0,
    "out_dir": None,
}


def cmd_synth_gen(args) -> int:
    m = _merged(args, SYNTH_DEFAULTS)
    out_dir = str(_require(m, "out_dir"))
    cfg = SceneConfig(
        seed=int(m["seed"]),
        count=int(m["count"]),
        stream=int(m["stream"]),
        frames=int(m["frames"]),
        grid=int(m["grid"]),
        levels=int(m["levels"]),
        dim=int(m["dim"]),
        n_objects=int(m["objects"]),
        noise=float(m["noise"]),
        distractors=int(m["distractors"]),
        prop_center_jitter=float(m["prop_center_jitter"]),
        prop_size_jitter=float(m["prop_size_jitter"]),
        size_lo=float(m["size_lo"]),
        size_hi=float(m["size_hi"]),
        mask_size=int(m["mask_size"]),
    )
    scenes = gen_scenes(cfg)
    os.makedirs(out_dir, exist_ok=True)
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(mask_dir, exist_ok=True)

    trajectories = [obj.trajectory for scene in scenes for obj in scene.objects]
    write_trajectories(os.path.join(out_dir, "trajectories.jsonl"), trajectories)

    records = []
    for scene in scenes:
        for frame, scored in enumerate(scene.proposals):
            records.append(
                {
                    "video_id": scene.video_id,
                    "frame": frame,
                    "boxes": [[sb.box.x1, sb.box.y1, sb.box.x2, sb.box.y2] for sb in scored],
                    "objectness": [sb.score for sb in scored],
                }
            )
    write_proposals(os.path.join(out_dir, "proposals.jsonl"), records)

    template_ids = sorted(QA_TEMPLATES)
    qa_rows = []
    for i, scene in enumerate(scenes):
        target = scene.target
        question, answer = render_qa(
            template_ids[i % len(template_ids)],
            target.region_phrase,
            f"the {target.region_phrase}",
        )
        qa_rows.append(
            {
                "video_id": scene.video_id,
                "target_id": target.target_id,
                "question": question,
                "answer": answer,
            }
        )
    write_qa_manifest(os.path.join(out_dir, "qa.jsonl"), qa_rows)

    for scene in scenes:
        video = target_masks(scene, cfg.mask_size)
        write_mask_video(os.path.join(mask_dir, f"{scene.video_id}.mask"), video)

    _say(f"wrote {len(scenes)} scenes ({len(trajectories)} trajectories) under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# tsf select / tsf corrupt

TSF_SELECT_DEFAULTS = {
    "seed": 0,
    "features": None,
    "trajectories": None,
    "video_id": None,
    "target_id": None,
    "k": 4,
    "spatial_weight": 0.25,
    "projection": None,
    "out": None,
}


def cmd_tsf_select(args) -> int:
    m = _merged(args, TSF_SELECT_DEFAULTS)
    feats_path = str(_require(m, "features"))
    traj_path = str(_require(m, "trajectories"))
    out_path = str(_require(m, "out"))
    tracks = read_trajectories(traj_path)
    wanted = [
        t
        for t in tracks
        if (m["video_id"] is None or t.video_id == m["video_id"])
        and (m["target_id"] is None or t.target_id == m["target_id"])
    ]
    if not wanted:
        raise ValueError("no trajectory matches the requested video/target ids")
    if len(wanted) > 1:
        raise ValueError(
            f"{len(wanted)} trajectories match; disambiguate with --video-id/--target-id"
        )
    traj = wanted[0]
    crops = read_feature_matrix(feats_path)
    joint = build_joint_features(traj, crops, w_s=float(m["spatial_weight"]))
    picks = select_representatives(joint, k=int(m["k"]), seed=int(m["seed"]))
    selected = [crops[i] for i in picks]
    if m["projection"] is not None:
        proj = ProjectionMap(np.stack(read_feature_matrix(str(m["projection"]))))
        tokens = emit_tokens(selected, proj, picks)
        write_feature_matrix(out_path, tokens.tokens)
    else:
        write_feature_matrix(out_path, selected)
    sys.stdout.write(dump_json({"selected_indices": [int(i) for i in picks]}) + "\n")
    return 0


TSF_CORRUPT_DEFAULTS = {
    "seed": 7,
    "trajectories": None,
    "kind": None,
    "level": None,
    "out": None,
}


def cmd_tsf_corrupt(args) -> int:
    m = _merged(args, TSF_CORRUPT_DEFAULTS)
    traj_path = str(_require(m, "trajectories"))
    kind = str(_require(m, "kind"))
    level = float(_require(m, "level"))
    out_path = str(_require(m, "out"))
    seed = int(m["seed"])
    if kind not in ("jitter", "idswitch", "dropout"):
        raise ValueError(f"unknown corruption kind {kind!r}")
    tracks = read_trajectories(traj_path)
    if kind == "idswitch":
        by_video: dict[str, list] = {}
        for t in tracks:
            by_video.setdefault(t.video_id, []).append(t)
        corrupted = []
        for video_id in sorted(by_video):
            corrupted.extend(corrupt_id_switch(by_video[video_id], level, seed))
    else:
        op = corrupt_jitter if kind == "jitter" else corrupt_dropout
        corrupted = [op(t, level, seed) for t in tracks]
    write_trajectories(out_path, corrupted)
    _say(f"corrupted {len(corrupted)} trajectories ({kind} @ {level:g}) -> {out_path}")
    return 0


# ---------------------------------------------------------------------------
# filter train / filter infer

FILTER_TRAIN_DEFAULTS = {
    "seed": 7,
    "count": 200,
    "steps": 2000,
    "lr": 0.05,
    "hidden": 48,
    "tsf_mode": "none",
    "corrupt_kind": "none",
    "corrupt_level": 0.0,
    **HARNESS_DEFAULTS,
    "out": None,
    "losses": None,
}


def _assemble_training(cfg: HarnessConfig, kind: str, level: float, use_tsf: bool):
    scenes = gen_scenes(cfg.scene_config(stream=0, count=cfg.train_count))
    proj = query_projection(cfg.scene_config(stream=0, count=0))
    inputs = [build_inputs(s, cfg) for s in scenes]
    teachers = [corrupt_teacher(s, kind, level, cfg.seed) for s in scenes]
    crops = [teacher_crops(s, t, cfg) for s, t in zip(scenes, teachers)]
    queries = [
        build_query(s, t, c, proj, cfg, use_tsf)
        for s, t, c in zip(scenes, teachers, crops)
    ]
    return [
        TrainScene(q, si.candidates, [si.gt_box]) for q, si in zip(queries, inputs)
    ]


def cmd_filter_train(args) -> int:
    m = _merged(args, FILTER_TRAIN_DEFAULTS)
    out_path = str(_require(m, "out"))
    mode = str(m["tsf_mode"])
    if mode not in TSF_MODES:
        raise ValueError(f"unknown tracked-feature mode {mode!r}")
    kind = str(m["corrupt_kind"])
    if kind not in CORRUPTION_KINDS:
        raise ValueError(f"unknown corruption kind {kind!r}")
    cfg = _harness_config(m, train_count=int(m["count"]), eval_count=1)
    train_scenes = _assemble_training(cfg, kind, float(m["corrupt_level"]), mode != "none")
    params, losses = train(
        train_scenes,
        TrainConfig(
            steps=cfg.steps,
            lr=cfg.lr,
            seed=cfg.seed,
            hidden=cfg.hidden,
            lambda_cls=cfg.lambda_cls,
            lambda_box=cfg.lambda_box,
        ),
    )
    save_head(out_path, params)
    if m["losses"] is not None:
        lines = ["step,loss"]
        lines.extend(f"{i},{fmt_float(v)}" for i, v in enumerate(losses))
        _write_text(str(m["losses"]), "\n".join(lines) + "\n")
    if losses:
        _say(
            f"trained {cfg.steps} steps on {cfg.train_count} scenes: "
            f"loss {losses[0]:.6f} -> {losses[-1]:.6f}"
        )
    _say(f"checkpoint -> {out_path}")
    return 0


FILTER_INFER_DEFAULTS = {
    "seed": 7,
    "count": 50,
    "head": None,
    "use_tsf": False,
    "stream": 1,
    **HARNESS_DEFAULTS,
    "out": None,
}

DECISIONS_HEADER = "video_id,rank,proposal_index,s_lang,s_final,selected,x1,y1,x2,y2"


def cmd_filter_infer(args) -> int:
    m = _merged(args, FILTER_INFER_DEFAULTS)
    head_path = str(_require(m, "head"))
    out_path = str(_require(m, "out"))
    params = load_head(head_path)
    cfg = _harness_config(m, train_count=1, eval_count=int(m["count"]))
    scenes = gen_scenes(cfg.scene_config(stream=int(m["stream"]), count=cfg.eval_count))
    proj = query_projection(cfg.scene_config(stream=0, count=0))
    inputs = [build_inputs(s, cfg) for s in scenes]
    teachers = [s.target.trajectory for s in scenes]
    crops = [teacher_crops(s, t, cfg) for s, t in zip(scenes, teachers)]
    queries = [
        build_query(s, t, c, proj, cfg, bool(m["use_tsf"]))
        for s, t, c in zip(scenes, teachers, crops)
    ]
    lines = [DECISIONS_HEADER]
    hits = 0
    for scene_inputs, query in zip(inputs, queries):
        decisions = run_head(query, scene_inputs.candidates, params, cfg.top_m, cfg.tau)
        if decisions and decisions[0].selected and iou(decisions[0].refined_box, scene_inputs.gt_box) > 0.5:
            hits += 1
        for rank, d in enumerate(decisions):
            b = d.refined_box
            lines.append(
                f"{scene_inputs.video_id},{rank},{d.proposal_index},"
                f"{fmt_float(d.s_lang)},{fmt_float(d.s_final)},{int(d.selected)},"
                f"{fmt_float(b.x1)},{fmt_float(b.y1)},{fmt_float(b.x2)},{fmt_float(b.y2)}"
            )
    _write_text(out_path, "\n".join(lines) + "\n")
    _say(
        f"box-IoU selection accuracy {hits / len(scenes):.4f} "
        f"over {len(scenes)} scenes (query-augmentation analogue, not a mask metric)"
    )
    return 0


# ---------------------------------------------------------------------------
# eval jf / eval recall

EVAL_JF_DEFAULTS = {"seed": 7, "pred": None, "gt": None, "video_id": None, "out": None}


def cmd_eval_jf(args) -> int:
    m = _merged(args, EVAL_JF_DEFAULTS)
    preds = m["pred"]
    gts = m["gt"]
    if not preds or not gts:
        raise UsageError("missing required option --pred/--gt")
    if isinstance(preds, str):
        preds = [preds]
    if isinstance(gts, str):
        gts = [gts]
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    ids = m["video_id"]
    if ids is None:
        ids = [os.path.splitext(os.path.basename(p))[0] for p in preds]
    elif isinstance(ids, str):
        ids = [ids]
    if len(ids) != len(preds):
        raise ValueError(f"{len(ids)} video ids vs {len(preds)} predictions")
    rows = []
    for video_id, pred_path, gt_path in zip(ids, preds, gts):
        pred = read_mask_video(pred_path, video_id=video_id)
        gt = read_mask_video(gt_path, video_id=video_id)
        j, f, jf = sequence_eval(pred, gt)
        rows.append((video_id, j, f, jf))
    _write_text(m["out"], render_report_csv(MetricReport(rows)))
    return 0


EVAL_RECALL_DEFAULTS = {
    "seed": 7,
    "proposals": None,
    "gt": None,
    "topk": 10,
    "iou_thresh": 0.5,
    "out": None,
}


def cmd_eval_recall(args) -> int:
    m = _merged(args, EVAL_RECALL_DEFAULTS)
    props = read_proposals(str(_require(m, "proposals")))
    gt = read_proposals(str(_require(m, "gt")))
    frames = []
    gt_boxes = []
    for video_id in sorted(gt):
        for frame in sorted(gt[video_id]):
            gt_boxes.append([sb.box for sb in gt[video_id][frame]])
            frames.append(props.get(video_id, {}).get(frame, []))
    recall = oracle_recall(frames, gt_boxes, topk=int(m["topk"]), iou_thresh=float(m["iou_thresh"]))
    payload = {
        "topk": int(m["topk"]),
        "iou_thresh": float(m["iou_thresh"]),
        "frames": len(frames),
        "recall": recall,
    }
    _write_text(m["out"], dump_json(payload) + "\n")
    return 0


# ---------------------------------------------------------------------------
# cost estimate

COST_DEFAULTS = {
    "seed": 7,
    "targets": None,
    "frames": None,
    "fast_motion": False,
    "occlusion": False,
    "small_target": False,
    "crowded": False,
    "short_simple": False,
    "out": None,
}


def cmd_cost_estimate(args) -> int:
    m = _merged(args, COST_DEFAULTS)
    scenario = Scenario(
        targets=int(_require(m, "targets")),
        frames=int(_require(m, "frames")),
        fast_motion=bool(m["fast_motion"]),
        occlusion=bool(m["occlusion"]),
        small_target=bool(m["small_target"]),
        crowded=bool(m["crowded"]),
        short_simple=bool(m["short_simple"]),
    )
    components = [
        {
            "name": entry.name,
            "per_unit_s": entry.per_unit_s,
            "count": entry.count(scenario),
            "seconds": entry.seconds(scenario),
        }
        for entry in DEFAULT_COST_TABLE
    ]
    payload = {
        "targets": scenario.targets,
        "frames": scenario.frames,
        "components": components,
        "total_overhead_s": total_overhead(scenario),
        "recommendation": recommend_tracking_prompts(scenario),
    }
    _write_text(m["out"], dump_json(payload) + "\n")
    return 0


# ---------------------------------------------------------------------------
# ablate run

ABLATE_DEFAULTS = {
    "seed": 7,
    "train_count": 200,
    "eval_count": 50,
    "steps": 2000,
    "lr": 0.05,
    "hidden": 48,
    "recall_topk": 10,
    **HARNESS_DEFAULTS,
    "tsf_modes": "none,train_only,train_and_inference",
    "box_prompts": "off,on",
    "corruptions": "none:0",
    "out": None,
}


def _parse_modes(value) -> tuple[str, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    modes = tuple(str(v).strip() for v in items if str(v).strip())
    if not modes:
        raise ValueError("tsf_modes must name at least one mode")
    return modes


def _parse_box_prompts(value) -> tuple[bool, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    out = []
    for v in items:
        if isinstance(v, bool):
            out.append(v)
            continue
        token = str(v).strip().lower()
        if token not in ("on", "off"):
            raise ValueError(f"box prompt values must be on/off, got {v!r}")
        out.append(token == "on")
    if not out:
        raise ValueError("box_prompts must name at least one setting")
    return tuple(out)


def _parse_corruptions(value) -> tuple[tuple[str, float], ...]:
    if isinstance(value, str):
        items = [v.strip() for v in value.split(",") if v.strip()]
    else:
        items = list(value)
    cells = []
    for item in items:
        if isinstance(item, str):
            kind, _, level = item.partition(":")
            cells.append((kind.strip(), float(level) if level else 0.0))
        elif isinstance(item, dict):
            cells.append((str(item["kind"]), float(item.get("level", 0.0))))
        else:
            kind, level = item
            cells.append((str(kind), float(level)))
    if not cells:
        raise ValueError("corruptions must name at least one cell")
    return tuple(cells)


def cmd_ablate_run(args) -> int:
    m = _merged(args, ABLATE_DEFAULTS)
    out_path = str(_require(m, "out"))
    cfg = _harness_config(m, train_count=int(m["train_count"]), eval_count=int(m["eval_count"]))
    rows = run_ablation(
        cfg,
        tsf_modes=_parse_modes(m["tsf_modes"]),
        box_prompts=_parse_box_prompts(m["box_prompts"]),
        corruptions=_parse_corruptions(m["corruptions"]),
    )
    _write_text(out_path, render_results_csv(rows))
    _say(
        f"{len(rows)} grid rows -> {out_path} "
        "(sel_acc is box-IoU selection accuracy on synthetic scenes; "
        "query augmentation stands in for token injection)"
    )
    return 0


# ---------------------------------------------------------------------------
# report render

REPORT_DEFAULTS = {"seed": 7, "input": None, "format": "table", "out": None}


def cmd_report_render(args) -> int:
    m = _merged(args, REPORT_DEFAULTS)
    in_path = str(_require(m, "input"))
    style = str(m["format"])
    if style not in ("table", "csv"):
        raise ValueError(f"unknown format {style!r}")
    with open(in_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    grid = [line.split(",") for line in lines if line]
    if not grid:
        raise FormatError(f"{in_path}: empty report")
    width = len(grid[0])
    for i, row in enumerate(grid):
        if len(row) != width:
            raise FormatError(f"{in_path}: row {i + 1} has {len(row)} cells, expected {width}")
    if style == "csv":
        text = "\n".join(",".join(row) for row in grid) + "\n"
    else:
        widths = [max(len(row[c]) for row in grid) for c in range(width)]
        rendered = []
        for row in grid:
            rendered.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        text = "\n".join(rendered) + "\n"
    _write_text(m["out"], text)
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> _Parser:
    parser = _Parser(prog="videoground", description=__doc__)
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def leaf(group, name, func, defaults):
        p = group.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON file mirroring flags")
        for key, value in defaults.items():
            if key in ("pred", "gt", "video_id") and func is cmd_eval_jf:
                p.add_argument(
                    "--" + key.replace("_", "-"), action="append", type=str, default=None
                )
                continue
            if isinstance(value, bool):
                kind = bool
            elif isinstance(value, int):
                kind = int
            elif isinstance(value, float):
                kind = float
            else:
                kind = str
            _add_flag(p, key, kind, None)
        p.set_defaults(func=func)
        return p

    tsf = groups.add_parser("tsf")
    tsf_sub = tsf.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(tsf_sub, "select", cmd_tsf_select, TSF_SELECT_DEFAULTS)
    leaf(tsf_sub, "corrupt", cmd_tsf_corrupt, TSF_CORRUPT_DEFAULTS)

    filt = groups.add_parser("filter")
    filt_sub = filt.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(filt_sub, "train", cmd_filter_train, FILTER_TRAIN_DEFAULTS)
    leaf(filt_sub, "infer", cmd_filter_infer, FILTER_INFER_DEFAULTS)

    ev = groups.add_parser("eval")
    ev_sub = ev.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(ev_sub, "jf", cmd_eval_jf, EVAL_JF_DEFAULTS)
    leaf(ev_sub, "recall", cmd_eval_recall, EVAL_RECALL_DEFAULTS)

    cost = groups.add_parser("cost")
    cost_sub = cost.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(cost_sub, "estimate", cmd_cost_estimate, COST_DEFAULTS)

    synth = groups.add_parser("synth")
    synth_sub = synth.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(synth_sub, "gen", cmd_synth_gen, SYNTH_DEFAULTS)

    abl = groups.add_parser("ablate")
    abl_sub = abl.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(abl_sub, "run", cmd_ablate_run, ABLATE_DEFAULTS)

    rep = groups.add_parser("report")
    rep_sub = rep.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaf(rep_sub, "render", cmd_report_render, REPORT_DEFAULTS)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ValueError, RuntimeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
