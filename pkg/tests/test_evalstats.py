import itertools
import json

import numpy as np
import pytest
from scipy import stats as scipy_stats

from oracles import enumeration_binomial_p, sequence_enumeration_binomial_p
from pixsift.errors import DomainError, IncompleteVotesError, InvariantError
from pixsift.evalstats import (
    CRITERIA,
    Annotation,
    SbSExperiment,
    aggregate,
    binomial_p,
    build_tasks,
    criterion_outcome,
    load_experiment,
    majority_vote,
    read_annotations,
)


def make_annotations(choices, prompt_index=0, criterion="aesthetics"):
    return [
        Annotation(
            experiment_id="e",
            prompt_index=prompt_index,
            criterion=criterion,
            annotator_id=f"ann{i}",
            choice=choice,
        )
        for i, choice in enumerate(choices)
    ]


class TestMajorityVote:
    def test_two_of_three(self):
        assert majority_vote(make_annotations(["A", "A", "B"])) == "A"

    def test_three_way_split_is_tie(self):
        assert majority_vote(make_annotations(["A", "B", "tie"])) == "tie"

    def test_tie_majority(self):
        assert majority_vote(make_annotations(["tie", "tie", "A"])) == "tie"

    def test_exhaustive_27_triples(self):
        for triple in itertools.product(["A", "B", "tie"], repeat=3):
            got = majority_vote(make_annotations(list(triple)))
            counts = {c: triple.count(c) for c in ("A", "B", "tie")}
            expected = next(
                (c for c in ("A", "B", "tie") if counts[c] >= 2), "tie"
            )
            assert got == expected, triple

    def test_wrong_count_rejected(self):
        with pytest.raises(IncompleteVotesError):
            majority_vote(make_annotations(["A", "B"]))

    def test_duplicate_annotator_rejected(self):
        annotations = make_annotations(["A", "A", "B"])
        annotations[1] = Annotation("e", 0, "aesthetics", "ann0", "A")
        with pytest.raises(IncompleteVotesError):
            majority_vote(annotations)


class TestBinomialP:
    def test_spot_values(self):
        assert binomial_p(5, 10) == 1.0
        assert binomial_p(8, 10) == 0.109375
        assert binomial_p(0, 10) == 0.001953125

    def test_symmetry(self):
        for n in (1, 2, 7, 10, 23, 500):
            for k in range(0, n + 1, max(1, n // 7)):
                assert binomial_p(k, n) == binomial_p(n - k, n)

    def test_monotone_lower_tail(self):
        for n in (6, 11, 30):
            previous = -1.0
            for k in range(0, n // 2 + 1):
                current = binomial_p(k, n)
                assert current >= previous
                previous = current

    def test_matches_enumeration_oracle_up_to_30(self):
        for n in range(1, 31):
            for k in range(n + 1):
                assert binomial_p(k, n) == pytest.approx(
                    enumeration_binomial_p(k, n), abs=1e-12
                )

    def test_matches_literal_sequence_enumeration(self):
        for n in range(1, 13):
            for k in range(n + 1):
                assert binomial_p(k, n) == pytest.approx(
                    sequence_enumeration_binomial_p(k, n), abs=1e-12
                )

    def test_matches_scipy_binomtest(self):
        for n in (10, 47, 500):
            for k in range(0, n + 1, max(1, n // 9)):
                expected = scipy_stats.binomtest(k, n, p=0.5).pvalue
                assert binomial_p(k, n) == pytest.approx(expected, rel=1e-9)

    def test_fractional_k_rounding(self):
        # Nearest-integer rounding; exact halves go away from n/2 so the
        # swap symmetry binomial_p(k) == binomial_p(n-k) survives rounding.
        assert binomial_p(2.4, 10) == binomial_p(2, 10)
        assert binomial_p(2.6, 10) == binomial_p(3, 10)
        assert binomial_p(2.5, 10) == binomial_p(2, 10)
        assert binomial_p(7.5, 10) == binomial_p(8, 10)
        assert binomial_p(2.5, 10) == binomial_p(7.5, 10)
        assert binomial_p(4.5, 10) == binomial_p(5.5, 10)
        assert binomial_p(3.5, 9) == binomial_p(5.5, 9)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            binomial_p(11, 10)
        with pytest.raises(DomainError):
            binomial_p(-0.5, 10)
        with pytest.raises(DomainError):
            binomial_p(0, 0)


class TestCriterionOutcome:
    def test_all_ties_is_exact_coin_flip(self):
        outcome = criterion_outcome("aesthetics", ["tie"] * 500)
        assert outcome.win_rate_a == 0.5
        assert outcome.p_value == 1.0
        assert not outcome.significant
        assert outcome.direction == "none"

    def test_documented_example_340_140_20(self):
        votes = ["A"] * 340 + ["B"] * 140 + ["tie"] * 20
        outcome = criterion_outcome("complexity", votes)
        assert outcome.win_rate_a == pytest.approx(0.70)
        assert outcome.p_value == binomial_p(350, 500)
        assert outcome.significant
        assert outcome.direction == "a_better"

    def test_color_coding_thresholds_at_n_500(self):
        # Win rate 0.69 is marked significant, 0.53 is not.
        significant = criterion_outcome("aesthetics", ["A"] * 345 + ["B"] * 155)
        assert significant.win_rate_a == pytest.approx(0.69)
        assert significant.significant
        neutral = criterion_outcome("relevance", ["A"] * 265 + ["B"] * 235)
        assert neutral.win_rate_a == pytest.approx(0.53)
        assert not neutral.significant

    def test_counts_conserved(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            votes = [
                ("A", "B", "tie")[i] for i in rng.integers(0, 3, size=int(rng.integers(1, 60)))
            ]
            outcome = criterion_outcome("fidelity", votes)
            assert outcome.wins_a + outcome.wins_b + outcome.ties == len(votes)


def full_annotation_set(experiment, vote_for):
    """vote_for(prompt_index, criterion, annotator) -> choice."""
    return [
        Annotation(
            experiment_id=experiment.experiment_id,
            prompt_index=p,
            criterion=c,
            annotator_id=f"ann{a}",
            choice=vote_for(p, c, a),
        )
        for p in range(len(experiment.prompts))
        for c in experiment.criteria
        for a in range(3)
    ]


class TestAggregate:
    def experiment(self, n_prompts=6):
        return SbSExperiment(
            experiment_id="exp",
            model_a="tuned",
            model_b="baseline",
            prompts=tuple(f"prompt {i}" for i in range(n_prompts)),
        )

    def test_all_tie_experiment(self):
        experiment = self.experiment()
        annotations = full_annotation_set(experiment, lambda p, c, a: "tie")
        outcomes = aggregate(experiment, annotations)
        assert [o.criterion for o in outcomes] == list(CRITERIA)
        for o in outcomes:
            assert o.p_value == 1.0
            assert o.win_rate_a == 0.5

    def test_label_swap_flips_direction_keeps_p(self):
        experiment = self.experiment(10)
        rng = np.random.default_rng(17)
        table = {
            (p, c): ("A", "B", "tie")[rng.integers(0, 3)]
            for p in range(10)
            for c in CRITERIA
        }
        annotations = full_annotation_set(experiment, lambda p, c, a: table[(p, c)])
        swap = {"A": "B", "B": "A", "tie": "tie"}
        swapped = full_annotation_set(experiment, lambda p, c, a: swap[table[(p, c)]])
        for before, after in zip(
            aggregate(experiment, annotations), aggregate(experiment, swapped)
        ):
            assert before.wins_a == after.wins_b
            assert before.wins_b == after.wins_a
            assert before.ties == after.ties
            assert before.p_value == after.p_value
            flip = {"a_better": "b_better", "b_better": "a_better", "none": "none"}
            assert after.direction == flip[before.direction]

    def test_incomplete_votes_rejected(self):
        experiment = self.experiment(2)
        annotations = full_annotation_set(experiment, lambda p, c, a: "A")
        with pytest.raises(IncompleteVotesError):
            aggregate(experiment, annotations[:-1])

    def test_duplicate_annotation_rejected(self):
        experiment = self.experiment(1)
        annotations = full_annotation_set(experiment, lambda p, c, a: "A")
        with pytest.raises(InvariantError):
            aggregate(experiment, annotations + [annotations[0]])


class TestBuildTasks:
    def experiment(self, n_prompts):
        return SbSExperiment(
            experiment_id="exp",
            model_a="tuned",
            model_b="baseline",
            prompts=tuple(f"p{i}" for i in range(n_prompts)),
        )

    def pairs(self, n):
        return [{"a": f"img/a{i}.png", "b": f"img/b{i}.png"} for i in range(n)]

    def test_cardinality(self):
        tasks = build_tasks(self.experiment(2), self.pairs(2))
        assert len(tasks) == 8  # 2 prompts x 4 criteria

    def test_placement_deterministic_per_seed(self):
        a = build_tasks(self.experiment(20), self.pairs(20), seed=5)
        b = build_tasks(self.experiment(20), self.pairs(20), seed=5)
        assert [t.placement for t in a] == [t.placement for t in b]
        c = build_tasks(self.experiment(20), self.pairs(20), seed=6)
        assert [t.placement for t in a] != [t.placement for t in c]

    def test_left_placement_roughly_balanced(self):
        tasks = build_tasks(self.experiment(250), self.pairs(250), seed=11)
        left_a = sum(1 for t in tasks if t.placement == "A") / len(tasks)
        assert 0.45 <= left_a <= 0.55

    def test_placement_maps_uris(self):
        tasks = build_tasks(self.experiment(5), self.pairs(5), seed=3)
        for t in tasks:
            pair = self.pairs(5)[t.prompt_index]
            if t.placement == "A":
                assert (t.left_image_uri, t.right_image_uri) == (pair["a"], pair["b"])
            else:
                assert (t.left_image_uri, t.right_image_uri) == (pair["b"], pair["a"])

    def test_choice_translation(self):
        tasks = build_tasks(self.experiment(1), self.pairs(1), seed=0)
        task = tasks[0]
        assert task.choice_to_model_side("tie") == "tie"
        sides = {task.choice_to_model_side("left"), task.choice_to_model_side("right")}
        assert sides == {"A", "B"}


class TestSerialization:
    def test_experiment_and_annotations_roundtrip(self, tmp_path):
        experiment_path = tmp_path / "exp.json"
        experiment_path.write_text(
            json.dumps(
                {
                    "experiment_id": "exp",
                    "model_a": "tuned",
                    "model_b": "baseline",
                    "prompts": ["p0", "p1"],
                    "image_pairs": [
                        {"a": "a0.png", "b": "b0.png"},
                        {"a": "a1.png", "b": "b1.png"},
                    ],
                    "seed": 4,
                }
            )
        )
        experiment, pairs, seed = load_experiment(experiment_path)
        assert experiment.model_a == "tuned"
        assert len(pairs) == 2
        assert seed == 4

        annotations_path = tmp_path / "ann.ndjson"
        lines = [
            json.dumps(
                {
                    "experiment_id": "exp",
                    "prompt_index": p,
                    "criterion": c,
                    "annotator_id": f"ann{a}",
                    "choice": "tie",
                }
            )
            for p in range(2)
            for c in CRITERIA
            for a in range(3)
        ]
        annotations_path.write_text("\n".join(lines) + "\n")
        annotations = read_annotations(annotations_path)
        outcomes = aggregate(experiment, annotations)
        assert all(o.p_value == 1.0 for o in outcomes)

    def test_same_models_rejected(self):
        with pytest.raises(InvariantError):
            SbSExperiment("e", "same", "same", prompts=("p",))
