"""Side-by-side human evaluation statistics.

Pairwise votes (A / B / tie) from three annotators are resolved per
(prompt, criterion) by majority; a three-way split counts as a tie. Win
rates credit half a win per tie, and significance uses the exact two-sided
binomial test at p = 1/2 with the minimum-likelihood convention: the
p-value sums P(X = i) over every outcome no more probable than the
observed count. All binomial mass is computed with exact integer
coefficients and only converted to float at the end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    IncompleteVotesError,
    InvariantError,
    IoError,
    ParseError,
)
from .ndjson import iter_ndjson, require_keys

CRITERIA = ("relevance", "aesthetics", "complexity", "fidelity")
CHOICES = ("A", "B", "tie")
SIGNIFICANCE_LEVEL = 0.05
ANNOTATORS_PER_TASK = 3


@dataclass(frozen=True)
class SbSExperiment:
    experiment_id: str
    model_a: str
    model_b: str
    prompts: tuple[str, ...]
    criteria: tuple[str, ...] = CRITERIA

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompts", tuple(self.prompts))
        object.__setattr__(self, "criteria", tuple(self.criteria))
        if not self.prompts:
            raise InvariantError("experiment needs at least one prompt")
        if self.model_a == self.model_b:
            raise InvariantError("model_a and model_b must differ")
        unknown = set(self.criteria) - set(CRITERIA)
        if unknown:
            raise InvariantError(f"unknown criteria: {sorted(unknown)}")


@dataclass(frozen=True)
class Annotation:
    experiment_id: str
    prompt_index: int
    criterion: str
    annotator_id: str
    choice: str

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise InvariantError(f"unknown criterion {self.criterion!r}")
        if self.choice not in CHOICES:
            raise InvariantError(f"choice must be one of {CHOICES}, got {self.choice!r}")
        if self.prompt_index < 0:
            raise InvariantError("prompt_index must be >= 0")


@dataclass(frozen=True)
class CriterionOutcome:
    criterion: str
    wins_a: int
    wins_b: int
    ties: int
    win_rate_a: float
    p_value: float
    significant: bool
    direction: str  # a_better | b_better | none

    @property
    def total(self) -> int:
        return self.wins_a + self.wins_b + self.ties

    def to_jsonable(self) -> dict:
        return {
            "criterion": self.criterion,
            "wins_a": self.wins_a,
            "wins_b": self.wins_b,
            "ties": self.ties,
            "win_rate_a": self.win_rate_a,
            "p_value": self.p_value,
            "significant": self.significant,
            "direction": self.direction,
        }


@dataclass(frozen=True)
class SbSTask:
    """One (prompt, criterion) comparison as shown to annotators."""

    task_id: str
    experiment_id: str
    prompt_index: int
    prompt: str
    criterion: str
    left_image_uri: str
    right_image_uri: str
    placement: str  # which model ("A" or "B") is shown on the left

    def __post_init__(self) -> None:
        if self.placement not in ("A", "B"):
            raise InvariantError(f"placement must be A or B, got {self.placement!r}")
        if self.left_image_uri == self.right_image_uri:
            raise InvariantError(f"task {self.task_id!r}: left and right URIs are equal")

    def choice_to_model_side(self, choice: str) -> str:
        """Translate a left/right/tie vote into A/B/tie via the stored placement."""
        if choice == "tie":
            return "tie"
        if choice == "left":
            return self.placement
        if choice == "right":
            return "A" if self.placement == "B" else "B"
        raise InvariantError(f"unknown vote choice {choice!r}")


def majority_vote(annotations: Sequence[Annotation]) -> str:
    """Choice held by >= 2 of exactly 3 annotators; a full split is a tie."""
    if len(annotations) != ANNOTATORS_PER_TASK:
        raise IncompleteVotesError(
            f"expected {ANNOTATORS_PER_TASK} annotations, got {len(annotations)}"
        )
    annotators = {a.annotator_id for a in annotations}
    if len(annotators) != ANNOTATORS_PER_TASK:
        raise IncompleteVotesError("annotations must come from distinct annotators")
    keys = {(a.prompt_index, a.criterion) for a in annotations}
    if len(keys) != 1:
        raise InvariantError("annotations span more than one (prompt, criterion)")
    counts = {c: 0 for c in CHOICES}
    for a in annotations:
        counts[a.choice] += 1
    for choice in CHOICES:
        if counts[choice] >= 2:
            return choice
    return "tie"


def binomial_p(k_half_wins: float, n: int) -> float:
    """Exact two-sided binomial p-value at success probability 1/2.

    The possibly fractional k (half-credit for ties) is rounded to the
    nearest integer first; exact halves round away from the distribution
    center n/2, so label-swapped inputs (k and n-k) always land on
    mirrored outcomes and the p-value is swap-invariant. The p-value is
    the total probability of outcomes no more likely than the observed
    one, with C(n, i) computed exactly.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if k_half_wins < 0 or k_half_wins > n:
        raise DomainError(f"k_half_wins must lie in [0, {n}], got {k_half_wins}")
    if k_half_wins - math.floor(k_half_wins) == 0.5:
        k = math.floor(k_half_wins) if k_half_wins < n / 2 else math.ceil(k_half_wins)
    else:
        k = math.floor(k_half_wins + 0.5)
    k = min(k, n)
    observed = math.comb(n, k)
    total = sum(c for i in range(n + 1) if (c := math.comb(n, i)) <= observed)
    return float(Fraction(total, 2**n))


def aggregate(
    experiment: SbSExperiment, annotations: Sequence[Annotation]
) -> list[CriterionOutcome]:
    """Per-criterion outcomes over the full prompt set.

    Every (prompt, criterion) must carry exactly 3 distinct-annotator
    votes; duplicates or gaps raise before anything is tallied.
    """
    grouped: dict[tuple[int, str], list[Annotation]] = {}
    seen: set[tuple[int, str, str]] = set()
    for a in annotations:
        if a.experiment_id != experiment.experiment_id:
            raise InvariantError(
                f"annotation for {a.experiment_id!r} mixed into "
                f"{experiment.experiment_id!r}"
            )
        if a.prompt_index >= len(experiment.prompts):
            raise InvariantError(f"prompt_index {a.prompt_index} out of range")
        dup_key = (a.prompt_index, a.criterion, a.annotator_id)
        if dup_key in seen:
            raise InvariantError(
                f"duplicate annotation for prompt {a.prompt_index}, "
                f"{a.criterion}, annotator {a.annotator_id!r}"
            )
        seen.add(dup_key)
        grouped.setdefault((a.prompt_index, a.criterion), []).append(a)

    outcomes = []
    for criterion in experiment.criteria:
        votes = []
        for prompt_index in range(len(experiment.prompts)):
            cell = grouped.get((prompt_index, criterion))
            if cell is None:
                raise IncompleteVotesError(
                    f"no annotations for prompt {prompt_index}, criterion {criterion}"
                )
            votes.append(majority_vote(cell))
        outcomes.append(criterion_outcome(criterion, votes))
    return outcomes


def criterion_outcome(criterion: str, votes: Sequence[str]) -> CriterionOutcome:
    """Tally majority votes for one criterion into a tested outcome."""
    wins_a = sum(1 for v in votes if v == "A")
    wins_b = sum(1 for v in votes if v == "B")
    ties = sum(1 for v in votes if v == "tie")
    total = wins_a + wins_b + ties
    if total == 0:
        raise IncompleteVotesError(f"criterion {criterion!r} has no votes")
    win_rate_a = (wins_a + ties / 2) / total
    p_value = binomial_p(wins_a + ties / 2, total)
    significant = p_value < SIGNIFICANCE_LEVEL
    if not significant or win_rate_a == 0.5:
        direction = "none"
    else:
        direction = "a_better" if win_rate_a > 0.5 else "b_better"
    return CriterionOutcome(
        criterion=criterion,
        wins_a=wins_a,
        wins_b=wins_b,
        ties=ties,
        win_rate_a=win_rate_a,
        p_value=p_value,
        significant=significant,
        direction=direction,
    )


def build_tasks(
    experiment: SbSExperiment,
    image_pairs: Sequence[Mapping[str, str]],
    seed: int = 0,
) -> list[SbSTask]:
    """Enumerate (prompt, criterion) tasks with seeded left/right placement.

    image_pairs[i] = {"a": uri of model_a's image, "b": uri of model_b's}.
    Placement is drawn once per task and recorded so votes can be mapped
    back to models.
    """
    if len(image_pairs) != len(experiment.prompts):
        raise InvariantError(
            f"need one image pair per prompt: {len(image_pairs)} pairs "
            f"for {len(experiment.prompts)} prompts"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    tasks = []
    for prompt_index, prompt in enumerate(experiment.prompts):
        pair = image_pairs[prompt_index]
        for criterion in experiment.criteria:
            placement = "A" if rng.random() < 0.5 else "B"
            left, right = (
                (pair["a"], pair["b"]) if placement == "A" else (pair["b"], pair["a"])
            )
            tasks.append(
                SbSTask(
                    task_id=f"{experiment.experiment_id}-{prompt_index:05d}-{criterion}",
                    experiment_id=experiment.experiment_id,
                    prompt_index=prompt_index,
                    prompt=prompt,
                    criterion=criterion,
                    left_image_uri=left,
                    right_image_uri=right,
                    placement=placement,
                )
            )
    return tasks


# --- serialization ---

def load_experiment(path: str | Path) -> tuple[SbSExperiment, list[Mapping[str, str]], int]:
    """Load an experiment definition: experiment, image pairs, and task seed."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read experiment {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}") from exc
    require_keys(obj, ("experiment_id", "model_a", "model_b", "prompts"), str(path))
    experiment = SbSExperiment(
        experiment_id=str(obj["experiment_id"]),
        model_a=str(obj["model_a"]),
        model_b=str(obj["model_b"]),
        prompts=tuple(str(p) for p in obj["prompts"]),
        criteria=tuple(obj.get("criteria", CRITERIA)),
    )
    pairs = obj.get("image_pairs", [])
    if pairs and len(pairs) != len(experiment.prompts):
        raise ParseError(f"{path}: image_pairs must match prompt count")
    for i, pair in enumerate(pairs):
        require_keys(pair, ("a", "b"), f"{path}: image_pairs[{i}]")
    return experiment, pairs, int(obj.get("seed", 0))


def read_annotations(path: str | Path) -> list[Annotation]:
    out = []
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        require_keys(
            obj, ("experiment_id", "prompt_index", "criterion", "annotator_id", "choice"), where
        )
        out.append(
            Annotation(
                experiment_id=str(obj["experiment_id"]),
                prompt_index=int(obj["prompt_index"]),
                criterion=str(obj["criterion"]),
                annotator_id=str(obj["annotator_id"]),
                choice=str(obj["choice"]),
            )
        )
    return out


def write_outcomes(path: str | Path, experiment: SbSExperiment, outcomes: Iterable[CriterionOutcome]) -> None:
    obj = {
        "experiment_id": experiment.experiment_id,
        "model_a": experiment.model_a,
        "model_b": experiment.model_b,
        "outcomes": [o.to_jsonable() for o in outcomes],
    }
    try:
        Path(path).write_text(
            json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write outcomes {path}: {exc}") from exc
