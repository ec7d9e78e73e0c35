"""Follow-up generation: MR matching, manipulation planning, edit + video orchestration."""

from __future__ import annotations

import json
import re
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from . import prompts
from .backends import BackendEndpoint, chat, edit, video
from .errors import AutomtError, NoApplicableMr
from .ontology import ROAD_WILDCARD, Verb
from .relations import MetamorphicRelation, render_gherkin, split_placement_suffix
from .scene import SourceTestCase, TestCaseRepresentation, representation_query_text
from .store import MrStore, RetrievalQuery, StoredMr, retrieve

DEFAULT_TOP_K = 5
DEFAULT_MIN_SPEED_MPS = 1.0
DEFAULT_STATIONARY_EPS_MPS = 0.05

# Dynamic agent classes excluded from the editable region for "add" edits.
DEFAULT_MASK_CLASSES = frozenset(
    {"person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle"}
)


class Placement(Enum):
    ON_ROAD = "on_road"
    ROADSIDE = "roadside"
    GLOBAL = "global"


class MaskPolicy(Enum):
    SEGMENTATION_FREE = "segmentation_free"
    NONE = "none"


_SUFFIX_TO_PLACEMENT = {
    "on the road": Placement.ON_ROAD,
    "on the roadside": Placement.ROADSIDE,
}


@dataclass(frozen=True)
class ManipulationPlan:
    verb: Verb
    instruction: str
    placement: Placement
    mask_policy: MaskPolicy
    mask_classes: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.verb is Verb.REPLACES:
            if self.placement is not Placement.GLOBAL or self.mask_policy is not MaskPolicy.NONE:
                raise ValueError("replace edits are global and maskless")
        elif self.mask_policy is not MaskPolicy.SEGMENTATION_FREE:
            raise ValueError("add edits use a segmentation-free mask")

    def to_dict(self) -> dict:
        return {
            "verb": self.verb.value,
            "instruction": self.instruction,
            "placement": self.placement.value,
            "mask_policy": self.mask_policy.value,
            "mask_classes": sorted(self.mask_classes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManipulationPlan":
        return cls(
            verb=Verb(data["verb"]),
            instruction=data["instruction"],
            placement=Placement(data["placement"]),
            mask_policy=MaskPolicy(data["mask_policy"]),
            mask_classes=frozenset(data.get("mask_classes", [])),
        )


@dataclass(frozen=True)
class FollowUpArtifact:
    source_case_id: str
    mr_index: int
    plan: ManipulationPlan
    edited_keyframe: Path
    frames: tuple[Path, ...]
    lineage: dict


def applicability_filter(
    rep: TestCaseRepresentation,
    mr: MetamorphicRelation,
    min_speed_mps: float = DEFAULT_MIN_SPEED_MPS,
    stationary_eps_mps: float = DEFAULT_STATIONARY_EPS_MPS,
) -> bool:
    """False when the MR cannot meaningfully apply to this test case."""
    if mr.expected_behavior == "slow down" and rep.ego_speed_mps < min_speed_mps:
        return False
    if mr.expected_behavior == "keep current" and abs(rep.ego_speed_mps) <= stationary_eps_mps:
        return False
    if mr.road_type != ROAD_WILDCARD and mr.road_type != rep.road_type:
        return False
    return True


_INDEX_REPLY = re.compile(r"(?i)index\s*[:#]?\s*(\d+)")


def match_mr(
    rep: TestCaseRepresentation,
    store: MrStore,
    chat_backend: BackendEndpoint,
    embed_backend: BackendEndpoint,
    top_k: int = DEFAULT_TOP_K,
    min_speed_mps: float = DEFAULT_MIN_SPEED_MPS,
    stationary_eps_mps: float = DEFAULT_STATIONARY_EPS_MPS,
) -> tuple[StoredMr, str]:
    """Retrieve, filter, let the chat backend choose, and count the execution.

    An out-of-set or unparseable choice falls back to the deterministic top
    survivor (ranking already prefers low execution counts on ties).
    """
    query_text = representation_query_text(rep)
    ranked = retrieve(store, RetrievalQuery(query_text, top_k=top_k), embed_backend)
    survivors = [
        (entry, sim)
        for entry, sim in ranked
        if applicability_filter(rep, entry.mr, min_speed_mps, stationary_eps_mps)
    ]
    if not survivors:
        raise NoApplicableMr(f"no applicable MR for case {rep.case_id!r}")
    candidates = [
        (entry.index, entry.execution_count, render_gherkin(entry.mr)) for entry, _ in survivors
    ]
    reply = chat(chat_backend, prompts.build_match_prompt(query_text, candidates))
    chosen = None
    match = _INDEX_REPLY.search(reply) or re.search(r"\b(\d+)\b", reply)
    if match:
        wanted = int(match.group(1))
        for entry, _ in survivors:
            if entry.index == wanted:
                chosen = entry
                break
    if chosen is None:
        chosen = survivors[0][0]
        rationale = f"fallback to top survivor (reply: {reply[:80]!r})"
    else:
        rationale = reply
    store.record_execution(chosen.index)
    return chosen, rationale


def plan_manipulation(mr: MetamorphicRelation) -> ManipulationPlan:
    """Lift verb/instruction from the MR and resolve placement and masking."""
    if mr.verb is Verb.REPLACES:
        return ManipulationPlan(
            verb=Verb.REPLACES,
            instruction=mr.manipulation,
            placement=Placement.GLOBAL,
            mask_policy=MaskPolicy.NONE,
        )
    _, suffix = split_placement_suffix(mr.manipulation)
    placement = _SUFFIX_TO_PLACEMENT.get(suffix, Placement.ON_ROAD)
    return ManipulationPlan(
        verb=Verb.ADDS,
        instruction=mr.manipulation,
        placement=placement,
        mask_policy=MaskPolicy.SEGMENTATION_FREE,
        mask_classes=DEFAULT_MASK_CLASSES,
    )


def _write_artifact(
    out_dir: Path,
    case: SourceTestCase,
    mr_index: int,
    plan: ManipulationPlan,
    edited: bytes,
    frames: list[bytes],
    lineage: dict,
) -> FollowUpArtifact:
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=out_dir.name + ".", dir=out_dir.parent))
    try:
        (tmp / "keyframe_edited.png").write_bytes(edited)
        frame_paths = []
        for i, data in enumerate(frames):
            (tmp / f"frame_{i:03d}.png").write_bytes(data)
            frame_paths.append(out_dir / f"frame_{i:03d}.png")
        plan_record = dict(plan.to_dict(), case_id=case.id, mr_index=mr_index)
        (tmp / "plan.json").write_text(
            json.dumps(plan_record, sort_keys=True, indent=1), encoding="utf-8"
        )
        (tmp / "lineage.json").write_text(
            json.dumps(lineage, sort_keys=True, indent=1), encoding="utf-8"
        )
        if out_dir.exists():
            shutil.rmtree(out_dir)
        tmp.rename(out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return FollowUpArtifact(
        source_case_id=case.id,
        mr_index=mr_index,
        plan=plan,
        edited_keyframe=out_dir / "keyframe_edited.png",
        frames=tuple(frame_paths),
        lineage=lineage,
    )


def generate_followup(
    case: SourceTestCase,
    plan: ManipulationPlan,
    edit_backend: BackendEndpoint,
    video_backend: BackendEndpoint,
    out_dir: str | Path,
    mr_index: int = -1,
    config_hash: str = "",
    clock: Callable[[], float] = time.time,
) -> FollowUpArtifact:
    """Edit the first frame, synthesize the frame sequence, persist with lineage."""
    out_dir = Path(out_dir)
    keyframe = case.frames[0].read_bytes()
    if plan.verb is Verb.ADDS:
        edited = edit(
            edit_backend,
            keyframe,
            plan.instruction,
            mode="add",
            mask_classes=sorted(plan.mask_classes),
            placement=plan.placement.value,
        )
    else:
        edited = edit(edit_backend, keyframe, plan.instruction, mode="replace")
    frames = video(
        video_backend, edited, list(case.speed_mps), list(case.steering_rad), len(case.frames)
    )
    lineage = {
        "case_id": case.id,
        "mr_index": mr_index,
        "backends": {"edit": edit_backend.url, "video": video_backend.url},
        "created_at": round(float(clock()), 3),
        "config_hash": config_hash,
    }
    return _write_artifact(out_dir, case, mr_index, plan, edited, frames, lineage)


def load_artifact(out_dir: str | Path) -> FollowUpArtifact:
    out_dir = Path(out_dir)
    plan_record = json.loads((out_dir / "plan.json").read_text(encoding="utf-8"))
    lineage = json.loads((out_dir / "lineage.json").read_text(encoding="utf-8"))
    return FollowUpArtifact(
        source_case_id=plan_record["case_id"],
        mr_index=int(plan_record["mr_index"]),
        plan=ManipulationPlan.from_dict(plan_record),
        edited_keyframe=out_dir / "keyframe_edited.png",
        frames=tuple(sorted(out_dir.glob("frame_*.png"))),
        lineage=lineage,
    )


def run_generation(
    cases: Sequence[SourceTestCase],
    reps: Sequence[TestCaseRepresentation],
    store: MrStore,
    chat_backend: BackendEndpoint,
    embed_backend: BackendEndpoint,
    edit_backend: BackendEndpoint,
    video_backend: BackendEndpoint,
    out_root: str | Path,
    skip_existing: bool = True,
    parallelism: int = 1,
    top_k: int = DEFAULT_TOP_K,
    min_speed_mps: float = DEFAULT_MIN_SPEED_MPS,
    stationary_eps_mps: float = DEFAULT_STATIONARY_EPS_MPS,
    config_hash: str = "",
    clock: Callable[[], float] = time.time,
) -> list[dict]:
    """One follow-up per source case; manifest entries in corpus order.

    Matching runs sequentially (execution counts mutate the store); edit and
    video generation run in parallel per case.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    reps_by_id = {rep.case_id: rep for rep in reps}
    manifest: list[dict] = [{} for _ in cases]
    jobs = []
    for position, case in enumerate(cases):
        artifact_dir = out_root / case.id
        if skip_existing and (artifact_dir / "lineage.json").exists():
            existing = load_artifact(artifact_dir)
            manifest[position] = {
                "case_id": case.id,
                "artifact_path": str(artifact_dir),
                "mr_index": existing.mr_index,
                "skipped": True,
            }
            continue
        rep = reps_by_id.get(case.id)
        if rep is None:
            manifest[position] = {"case_id": case.id, "error": "missing representation"}
            continue
        try:
            entry, _ = match_mr(
                rep, store, chat_backend, embed_backend, top_k, min_speed_mps, stationary_eps_mps
            )
        except NoApplicableMr as exc:
            manifest[position] = {"case_id": case.id, "error": str(exc)}
            continue
        jobs.append((position, case, entry))

    def produce(job):
        position, case, entry = job
        artifact = generate_followup(
            case,
            plan_manipulation(entry.mr),
            edit_backend,
            video_backend,
            out_root / case.id,
            mr_index=entry.index,
            config_hash=config_hash,
            clock=clock,
        )
        return position, artifact

    def record(position, case, result):
        if isinstance(result, AutomtError):
            manifest[position] = {"case_id": case.id, "error": str(result)}
        else:
            manifest[position] = {
                "case_id": case.id,
                "artifact_path": str(out_root / case.id),
                "mr_index": result.mr_index,
            }

    if parallelism <= 1:
        for job in jobs:
            try:
                position, artifact = produce(job)
            except AutomtError as exc:
                record(job[0], job[1], exc)
            else:
                record(position, job[1], artifact)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            def safe(job):
                try:
                    return produce(job)
                except AutomtError as exc:
                    return job[0], exc

            for (position, result), job in zip(pool.map(safe, jobs), jobs):
                record(position, job[1], result)
    return manifest
