import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcn.errors import KgcnError
from kgcn.graph import permute
from kgcn.numcore import Rng
from kgcn.skeleton import (
    SBU_BONES,
    MinMaxScaler,
    SkeletonSequence,
    build_graph,
    centroid_accuracy,
    load_sbu,
    parse_sbu,
    parse_split,
    synth_dataset,
    synth_split,
    temporal_chunk,
    topology_edges,
)
from kgcn.train import split_graphs


def sbu_line(index, values):
    return ",".join([str(index)] + [repr(float(v)) for v in values])


def test_parse_single_zero_line():
    seq = parse_sbu(sbu_line(1, [0] * 90))
    assert seq.frames == 1 and seq.coords.shape == (1, 2, 15, 3)
    assert not seq.coords.any()


def test_parse_sorts_frames():
    a, b = [1.0] * 90, [2.0] * 90
    seq = parse_sbu(sbu_line(2, b) + "\n" + sbu_line(1, a) + "\n")
    assert seq.coords[0, 0, 0, 0] == 1.0 and seq.coords[1, 0, 0, 0] == 2.0


def test_parse_layout_person_major():
    vals = np.arange(90.0)
    seq = parse_sbu(sbu_line(1, vals))
    assert seq.coords[0, 1, 0].tolist() == [45.0, 46.0, 47.0]
    assert seq.coords[0, 0, 2].tolist() == [6.0, 7.0, 8.0]


def test_parse_errors():
    good = sbu_line(1, [0] * 90)
    bad = sbu_line(2, [0] * 89)
    with pytest.raises(KgcnError, match="line 2"):
        parse_sbu(good + "\n" + bad)
    with pytest.raises(KgcnError, match="bad-record"):
        parse_sbu(bad)
    with pytest.raises(KgcnError, match="parse-error"):
        parse_sbu("1," + ",".join(["x"] * 90))


def test_parse_custom_shape():
    seq = parse_sbu("0,1,2,3,4,5,6", persons=1, joints=2)
    assert seq.coords.shape == (1, 1, 2, 3)


# -- temporal chunks -------------------------------------------------------------

@given(st.integers(1, 40), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_chunk_constant(T, x, y, z):
    out = temporal_chunk(np.tile([x, y, z], (T, 1)), 8)
    assert out.shape == (24,)
    assert np.allclose(out, np.tile([x, y, z], 8))


def test_chunk_one_frame_each():
    traj = Rng(1).normal(size=(8, 3))
    assert np.array_equal(temporal_chunk(traj, 8), traj.ravel())


def test_chunk_ramp():
    traj = np.zeros((16, 3))
    traj[:, 0] = np.arange(16)
    out = temporal_chunk(traj, 8).reshape(8, 3)
    assert out[:, 0].tolist() == [0.5, 2.5, 4.5, 6.5, 8.5, 10.5, 12.5, 14.5]


def test_chunk_short_sequence_inherits():
    traj = np.array([[1.0, 0, 0], [3.0, 0, 0], [5.0, 0, 0]])
    out = temporal_chunk(traj, 5).reshape(5, 3)[:, 0]
    # frames land in chunks 0, 1, 3; chunks 2 and 4 repeat their predecessor
    assert out.tolist() == [1.0, 3.0, 3.0, 5.0, 5.0]


@given(st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_chunk_frame_rate_doubling(k, seed):
    traj = Rng(seed).normal(size=(8 * k, 3))
    assert np.allclose(temporal_chunk(np.repeat(traj, 2, axis=0), 8), temporal_chunk(traj, 8), atol=1e-12)


# -- graphs ----------------------------------------------------------------------

def test_build_graph_sbu_shape():
    seq = SkeletonSequence(Rng(0).normal(size=(20, 2, 15, 3)))
    G = build_graph(seq)
    assert G.n == 30 and G.dim == 24
    assert G.node_names[16] == "p1j1"


def test_tree_topology_is_connected_tree():
    edges = topology_edges("tree", 2, 15)
    assert len(edges) == 2 * len(SBU_BONES) + 1 == 29


def test_full_topology_uniform():
    seq = SkeletonSequence(Rng(0).normal(size=(5, 1, 4, 3)))
    G = build_graph(seq, M=2, topology="full")
    assert np.allclose(G.adjacency, 0.25)


def test_joint_permutation_commutes_with_build():
    rng = Rng(9)
    seq = SkeletonSequence(rng.normal(size=(12, 2, 15, 3)), label=3)
    G = build_graph(seq, M=4)
    pi = rng.permutation(30)
    coords = seq.coords.reshape(12, 30, 3)[:, pi].reshape(12, 2, 15, 3)
    inv = np.argsort(pi)
    edges = [(int(inv[i]), int(inv[j])) for i, j in topology_edges("tree", 2, 15)]
    H = build_graph(SkeletonSequence(coords, 3), M=4, edges=edges)
    P = permute(G, pi)
    assert np.array_equal(H.signals, P.signals)
    assert np.allclose(H.adjacency, P.adjacency, atol=1e-15)


def test_bad_topology():
    with pytest.raises(KgcnError, match="bad-topology"):
        topology_edges("ring", 2, 15)


# -- SBU layout and splits ---------------------------------------------------------

def write_take(root, setname, cls, take, frames):
    d = root / setname / f"{cls:02d}" / take
    d.mkdir(parents=True)
    (d / "skeleton_pos.txt").write_text("\n".join(sbu_line(i + 1, f) for i, f in enumerate(frames)) + "\n")


def test_load_sbu_tree(tmp_path):
    rng = Rng(3)
    for cls in (1, 2):
        for take in ("001", "002"):
            write_take(tmp_path, "s01s02", cls, take, rng.uniform(0, 1, size=(10, 90)))
    graphs = load_sbu(tmp_path, M=4)
    assert [g.name for g in graphs] == ["s01s02/01/001", "s01s02/01/002", "s01s02/02/001", "s01s02/02/002"]
    assert [g.label for g in graphs] == [0, 0, 1, 1]
    split = parse_split("[train]\ns01s02/01/001\ns01s02/02/001\n\n[test]\n# held out\ns01s02/01/002\ns01s02/02/002\n")
    tr, te = split_graphs(graphs, split)
    assert len(tr) == len(te) == 2


def test_load_sbu_empty(tmp_path):
    with pytest.raises(KgcnError, match="no-data"):
        load_sbu(tmp_path)


def test_parse_split_errors():
    with pytest.raises(KgcnError, match="bad-split"):
        parse_split("a\n[train]\n")
    with pytest.raises(KgcnError, match="bad-split"):
        parse_split("[valid]\nx\n")


# -- normalization ---------------------------------------------------------------

def test_minmax_train_only_statistics():
    graphs, split = synth_split(2, 3, 2, seed=1, M=2)
    tr, te = split_graphs(graphs, split)
    sc = MinMaxScaler.fit(tr)
    Z = np.concatenate([sc.transform(g).signals for g in tr])
    assert Z.min() == 0.0 and Z.max() == 1.0
    for g in te:
        s = sc.transform(g).signals
        assert s.min() >= 0.0 and s.max() <= 1.0
    assert MinMaxScaler.from_dict(sc.to_dict()).lo.tolist() == sc.lo.tolist()


def test_minmax_constant_dimension():
    sc = MinMaxScaler(np.array([0.0, 2.0]), np.array([1.0, 2.0]))
    assert sc.transform_signals(np.array([[0.5, 2.0]])).tolist() == [[0.5, 0.0]]


# -- synthetic data ----------------------------------------------------------------

def test_synth_counts_and_determinism():
    a = synth_dataset(4, 50, seed=7)
    b = synth_dataset(4, 50, seed=7)
    assert len(a) == 200
    assert np.bincount([g.label for g in a]).tolist() == [50] * 4
    assert all(x.same_as(y) for x, y in zip(a, b))
    assert len({g.name for g in a}) == 200
    c = synth_dataset(4, 5, seed=8)
    assert not a[0].same_as(c[0])


def test_synth_centroid_separable():
    graphs, split = synth_split(4, 50, 25, seed=7)
    tr, te = split_graphs(graphs, split)
    assert centroid_accuracy(tr, te) > 0.8
