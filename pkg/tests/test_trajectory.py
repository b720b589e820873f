import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starpo.errors import DimMismatch, EmptyInput, EmptyStep, InvalidTrajectory, IoError, ParseError
from starpo.trajectory import (
    ErrorLabel,
    Trajectory,
    embed_steps,
    load_trajectories,
    save_trajectories,
    segment_steps,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def trajectories(draw):
    K = draw(st.integers(1, 6))
    d = draw(st.integers(1, 5))
    steps = draw(st.lists(st.lists(finite, min_size=d, max_size=d), min_size=K, max_size=K))
    texts = draw(st.none() | st.lists(st.text(max_size=8), min_size=K, max_size=K))
    reward = draw(st.none() | st.floats(0.0, 1.0))
    label = draw(st.none() | st.sampled_from(list(ErrorLabel)))
    meta = draw(st.dictionaries(st.text(max_size=5), st.text(max_size=5), max_size=3))
    return Trajectory(draw(st.text(max_size=6)), np.array(steps), texts, reward, label, meta)


class TestSegmentation:
    def test_line(self):
        assert segment_steps("step one\nstep two") == ["step one", "step two"]

    def test_single_line(self):
        assert segment_steps("only step") == ["only step"]

    def test_sentence(self):
        assert segment_steps("a. b. c.", "sentence") == ["a.", "b.", "c."]

    def test_marker(self):
        assert segment_steps("x ## y ##z", "marker", marker="##") == ["x", "y", "z"]

    @pytest.mark.parametrize("text", ["", "   ", "\n\t\n"])
    def test_empty(self, text):
        with pytest.raises(EmptyInput):
            segment_steps(text)

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            segment_steps("a", "paragraph")

    @given(st.lists(st.text(alphabet="abc xyz", min_size=1, max_size=10).filter(str.strip), min_size=1, max_size=6))
    def test_lines_partition_in_order(self, parts):
        text = "\n".join(parts)
        spans = segment_steps(text)
        assert spans == [p.strip() for p in parts]
        # every non-whitespace character is covered, in order
        assert "".join(spans).replace(" ", "") == text.replace(" ", "").replace("\n", "")


class TestEmbed:
    def test_mean_of_two(self):
        t = embed_steps([[(2, 0), (0, 2)]])
        np.testing.assert_array_equal(t.steps, [[1.0, 1.0]])

    def test_singletons(self):
        t = embed_steps([[(1, 1)], [(3, 3)]])
        np.testing.assert_array_equal(t.steps, [[1, 1], [3, 3]])
        assert t.K == 2

    def test_identical_tokens(self):
        np.testing.assert_array_equal(embed_steps([[(1, 0)] * 3]).steps, [[1, 0]])

    def test_empty_step(self):
        with pytest.raises(EmptyStep):
            embed_steps([[(1, 0)], []])

    def test_dim_mismatch_across_steps(self):
        with pytest.raises(DimMismatch):
            embed_steps([[(1, 0)], [(1, 0, 0)]])

    def test_dim_mismatch_within_step(self):
        with pytest.raises(DimMismatch):
            embed_steps([[(1, 0), (1, 0, 0)]])

    def test_no_steps(self):
        with pytest.raises(EmptyInput):
            embed_steps([])

    @given(st.lists(st.lists(st.integers(-50, 50), min_size=3, max_size=3), min_size=1, max_size=6), st.randoms())
    def test_permutation_invariant_within_step(self, toks, rnd):
        shuffled = list(toks)
        rnd.shuffle(shuffled)
        a = embed_steps([toks]).steps
        b = embed_steps([shuffled]).steps
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


class TestTrajectory:
    def test_invariants(self):
        with pytest.raises(InvalidTrajectory):
            Trajectory("x", np.zeros((0, 2)))
        with pytest.raises(InvalidTrajectory):
            Trajectory("x", [[0.0, math.nan]])
        with pytest.raises(InvalidTrajectory):
            Trajectory("x", [[0.0], [1.0]], step_texts=["one"])
        with pytest.raises(InvalidTrajectory):
            Trajectory("x", [[0.0]], task_reward=1.5)
        with pytest.raises(InvalidTrajectory):
            Trajectory("x", [[0.0]], label="typo")

    def test_steps_read_only(self):
        t = Trajectory("x", [[0.0, 1.0]])
        with pytest.raises(ValueError):
            t.steps[0, 0] = 5.0

    def test_label_coercion(self):
        assert Trajectory("x", [[0.0]], label="leap").label is ErrorLabel.LOGICAL_LEAP


class TestFiles:
    def test_one_record(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text(json.dumps({"id": "a", "steps": [[0, 0], [1, 0], [2, 0]]}) + "\n")
        out = load_trajectories(p)
        assert len(out) == 1 and out[0].K == 3

    def test_mismatched_dimension(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"id": "a", "steps": [[0, 0]]}\n{"id": "b", "steps": [[0, 0], [1]]}\n')
        with pytest.raises(InvalidTrajectory) as exc:
            load_trajectories(p)
        assert exc.value.line == 2

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text("")
        assert load_trajectories(p) == []

    def test_parse_error_line(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"id": "a", "steps": [[0]]}\n\n{broken\n')
        with pytest.raises(ParseError) as exc:
            load_trajectories(p)
        assert exc.value.line == 3

    def test_nan_literal_rejected(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"id": "a", "steps": [[NaN]]}\n')
        with pytest.raises(ParseError):
            load_trajectories(p)

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"id": "a", "steps": [[0]], "extra": 1}\n')
        with pytest.raises(InvalidTrajectory):
            load_trajectories(p)

    def test_meta_preserved(self, tmp_path):
        t = Trajectory("a", [[0.1, 0.2]], meta={"source": "toy", "note": "é"})
        save_trajectories([t], tmp_path / "x.jsonl")
        assert load_trajectories(tmp_path / "x.jsonl") == [t]

    def test_nan_before_write(self, tmp_path):
        with pytest.raises(InvalidTrajectory):
            save_trajectories([object()], tmp_path / "x.jsonl")  # type: ignore[list-item]

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(IoError):
            save_trajectories([Trajectory("a", [[0.0]])], blocker / "sub" / "x.jsonl")

    @settings(max_examples=60, deadline=None)
    @given(st.lists(trajectories(), max_size=4))
    def test_round_trip(self, tmp_path_factory, trajs):
        p = tmp_path_factory.mktemp("rt") / "t.jsonl"
        save_trajectories(trajs, p)
        back = load_trajectories(p)
        assert back == trajs
        for a, b in zip(back, trajs):
            # bit-exact, including signed zeros
            assert a.steps.tobytes() == b.steps.tobytes()
