import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aapa.attachment import hierarchy_timeline
from aapa.guidance import (
    TrackingVector,
    build_tracking_vector,
    build_weight_matrix,
    column_mapping,
    read_matrix,
    write_matrix,
)
from aapa.simulator import GeneratorParams, generate_scenario, render_ground_truth


def test_two_frame_example():
    v = TrackingVector(("a", "c"))
    cols = {"a": 0, "b": 1, "c": 2}
    m = build_weight_matrix(v, 3, 100, columns=cols)
    np.testing.assert_array_equal(m.values, [[100, 1, 1], [1, 1, 100]])
    np.testing.assert_array_equal(build_weight_matrix(v, 3, 1, columns=cols).values, np.ones((2, 3)))


def test_softmax_rows():
    v = TrackingVector(("a", "c"))
    m = build_weight_matrix(v, 3, 2, normalize=True, columns={"a": 0, "c": 2})
    e = np.exp(1.0)  # softmax of (2, 1, 1)
    np.testing.assert_allclose(m.values[0], [e / (e + 2), 1 / (e + 2), 1 / (e + 2)], rtol=1e-12)
    assert m.normalized


def test_weight_matrix_errors():
    v = TrackingVector(("a",))
    with pytest.raises(KeyError):
        build_weight_matrix(v, 3, 10, columns={"b": 0})
    with pytest.raises(ValueError):
        build_weight_matrix(v, 3, 0)
    with pytest.raises(ValueError):
        build_weight_matrix(v, 3, 10, columns={"a": 5})


def _scenario(seed, template="carried"):
    script = generate_scenario(GeneratorParams(n_frames=120, template=template), seed=seed)
    anns = render_ground_truth(script)
    timeline = hierarchy_timeline(sorted(script.actions, key=lambda a: a.frame), script.registry, script.n_frames)
    return script, anns, timeline


def test_tracking_vector_points_at_container():
    script, anns, timeline = _scenario(0)
    v = build_tracking_vector(anns, timeline, "snitch")
    for ann, oid in zip(anns, v.entries):
        if ann.label in ("contained", "carried"):
            assert oid == "cone0"
        elif ann.label == "visible":
            assert oid == "snitch"
    assert "cone0" in v.entries


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 500), st.sampled_from([2.0, 10.0, 100.0]))
def test_one_marked_entry_per_row(seed, w):
    _, anns, timeline = _scenario(seed)
    cols = column_mapping(anns)
    v = build_tracking_vector(anns, timeline, "snitch")
    m = build_weight_matrix(v, 15, w, columns=cols).values
    assert ((m != 1).sum(axis=1) == 1).all()
    assert list(m.argmax(axis=1)) == [cols[o] for o in v.entries]


def test_matrix_file_round_trip(tmp_path):
    m = build_weight_matrix(TrackingVector(("a", "b")), 4, 10, normalize=True)
    write_matrix(tmp_path / "w.txt", m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "w.txt"), m.values)
