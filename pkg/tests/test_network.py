import numpy as np
import pytest

from toporec.colors import ColorSet, hyab, pack_srgb, srgb_to_lab
from toporec.mapper import MapperGraph, RefinedCluster, build_cover
from toporec.network import (
    ColorNetwork,
    ColorNode,
    NetworkParams,
    augment_cyclic_edges,
    chroma_hue_lens,
    generate_color_network,
    merge_redundant_nodes,
    similarity_matrix,
)

XI = np.pi / 8


def color_set(rgbs):
    srgb = np.asarray(rgbs, dtype=np.int64)
    return ColorSet(srgb=srgb, lab=srgb_to_lab(srgb))


class TestLens:
    def test_gray_axis_angle_zero(self):
        out = chroma_hue_lens((50.0, 0.0, 0.0), XI)
        assert out == pytest.approx((0.0, XI))

    def test_positive_a_axis(self):
        out = chroma_hue_lens((50.0, 1.0, 0.0), XI)
        assert out == pytest.approx((1.0, XI))

    def test_positive_b_axis(self):
        out = chroma_hue_lens((50.0, 0.0, 2.0), XI)
        assert out == pytest.approx((2.0, XI + np.pi / 2))

    def test_negative_a_is_not_positive_a(self):
        plus = chroma_hue_lens((50.0, 3.0, 0.0), XI)
        minus = chroma_hue_lens((50.0, -3.0, 0.0), XI)
        assert abs(plus[1] - minus[1]) == pytest.approx(np.pi)

    def test_hue_range(self):
        rng = np.random.default_rng(0)
        lab = rng.uniform(-60, 60, size=(200, 3))
        out = chroma_hue_lens(lab, XI)
        assert np.all(out[:, 1] >= XI)
        assert np.all(out[:, 1] < XI + 2 * np.pi)


def node_of(*packed):
    return ColorNode(members=np.asarray(sorted(packed), dtype=np.int64))


class TestCyclicAugmentation:
    @staticmethod
    def cover_with_hue_cells(n_chroma, n_hue):
        vals = np.random.default_rng(1).uniform(0, 1, size=(50, 2))
        return build_cover(vals, (n_chroma, n_hue), (0.1, 0.25))

    @staticmethod
    def cluster(cell, members):
        return RefinedCluster(cell=cell, members=np.asarray(members))

    def test_no_last_interval_nodes_unchanged(self):
        cover = self.cover_with_hue_cells(1, 4)
        graph = MapperGraph(nodes=[self.cluster((0, 0), [0]), self.cluster((0, 1), [1])])
        out = augment_cyclic_edges(graph, cover)
        assert out.edges == []

    def test_first_last_same_chroma_linked(self):
        cover = self.cover_with_hue_cells(2, 4)
        graph = MapperGraph(nodes=[self.cluster((0, 0), [0]),
                                   self.cluster((0, 3), [1]),
                                   self.cluster((1, 3), [2])])
        out = augment_cyclic_edges(graph, cover)
        assert out.edges == [(0, 1)]

    def test_existing_edge_not_duplicated(self):
        cover = self.cover_with_hue_cells(1, 4)
        graph = MapperGraph(nodes=[self.cluster((0, 0), [0, 1]),
                                   self.cluster((0, 3), [1, 2])],
                            edges=[(0, 1)])
        out = augment_cyclic_edges(graph, cover)
        assert out.edges == [(0, 1)]


class TestMerge:
    def test_identical_nodes_merge(self):
        m = np.array([pack_srgb((10, 10, 10)), pack_srgb((20, 20, 20))])
        members, edges = merge_redundant_nodes([m.copy(), m.copy()], set(),
                                               threshold=0.95, eps=7.0)
        assert len(members) == 1

    def test_high_overlap_far_means_not_merged(self):
        base = [pack_srgb((v, v, v)) for v in range(0, 200, 2)]
        a = np.asarray(sorted(base), dtype=np.int64)
        # same members plus a far-out extreme that drags the mean away
        b = np.asarray(sorted(base[:-1] + [pack_srgb((255, 255, 255))] * 0
                              + [pack_srgb((255, 0, 0))]), dtype=np.int64)
        overlap = len(np.intersect1d(a, b)) / min(len(a), len(b))
        assert overlap > 0.95
        if hyab(srgb_to_lab(np.array([100, 100, 100])), srgb_to_lab(np.array([0, 0, 0]))) > 0:
            members, _ = merge_redundant_nodes([a, b], set(), threshold=0.95, eps=0.05)
            assert len(members) == 2

    def test_disjoint_nodes_unchanged(self):
        a = np.array([pack_srgb((0, 0, 0))])
        b = np.array([pack_srgb((255, 255, 255))])
        members, edges = merge_redundant_nodes([a, b], {(0, 1)}, 0.95, 7.0)
        assert len(members) == 2
        assert edges == {(0, 1)}

    def test_edges_reattached(self):
        m = np.array([pack_srgb((10, 10, 10))])
        other = np.array([pack_srgb((200, 200, 200))])
        members, edges = merge_redundant_nodes(
            [m.copy(), m.copy(), other], {(0, 2), (1, 2)}, 0.95, 7.0)
        assert len(members) == 2
        assert edges == {(0, 1)}


class TestSimilarityMatrix:
    def test_unit_diagonal(self):
        delta = similarity_matrix(3, [(0, 1, 2.0), (1, 2, 3.0)])
        np.testing.assert_allclose(np.diag(delta), 1.0)

    def test_single_edge_weight_four(self):
        delta = similarity_matrix(2, [(0, 1, 4.0)])
        assert delta[0, 1] == pytest.approx(0.2)
        assert delta[1, 0] == pytest.approx(0.2)

    def test_path_graph_shortest_path(self):
        delta = similarity_matrix(3, [(0, 1, 2.0), (1, 2, 3.0)])
        assert delta[0, 2] == pytest.approx(1.0 / 6.0)

    def test_shortcut_preferred(self):
        delta = similarity_matrix(3, [(0, 1, 2.0), (1, 2, 3.0), (0, 2, 1.0)])
        assert delta[0, 2] == pytest.approx(0.5)

    def test_unreachable_zero(self):
        delta = similarity_matrix(3, [(0, 1, 1.0)])
        assert delta[0, 2] == 0.0
        assert delta[2, 2] == 1.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            similarity_matrix(2, [(0, 1, -1.0)])

    def test_removing_edge_never_increases_similarity(self):
        rng = np.random.default_rng(13)
        n = 8
        edges = [(i, j, float(rng.uniform(0.5, 5)))
                 for i in range(n) for j in range(i + 1, n) if rng.uniform() < 0.5]
        full = similarity_matrix(n, edges)
        for k in range(len(edges)):
            reduced = similarity_matrix(n, edges[:k] + edges[k + 1:])
            assert np.all(reduced <= full + 1e-12)

    def test_edge_lower_bound(self):
        rng = np.random.default_rng(14)
        edges = [(0, 1, 2.5), (1, 2, 1.0), (2, 3, 4.0), (0, 3, 9.0)]
        delta = similarity_matrix(4, edges)
        for u, v, w in edges:
            assert delta[u, v] >= 1.0 / (1.0 + w) - 1e-12


TOY_REDS = [(200, 0, 0), (210, 0, 0), (220, 0, 0)]
TOY_GREENS = [(0, 200, 0), (0, 210, 0), (0, 220, 0)]


def toy_params(**kw):
    defaults = dict(xi=XI, n_intervals=(1, 2), gains=(0.0, 0.1),
                    eps=15.0, min_pts=2, merge_overlap=0.95)
    defaults.update(kw)
    return NetworkParams(**defaults)


class TestGenerateNetwork:
    def test_two_hue_groups_two_nodes(self):
        net = generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())
        assert net.n_regions == 2
        assert len(net.edges) in (0, 1)
        sets = [set(n.members.tolist()) for n in net.nodes]
        assert {pack_srgb(np.array(c)) for c in TOY_REDS} in sets
        assert {pack_srgb(np.array(c)) for c in TOY_GREENS} in sets

    def test_single_cell_single_node(self):
        net = generate_color_network(
            color_set(TOY_REDS + TOY_GREENS),
            toy_params(n_intervals=(1, 1), eps=500.0))
        assert net.n_regions == 1
        np.testing.assert_allclose(net.delta, [[1.0]])

    def test_delta_properties(self):
        net = generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())
        d = net.delta
        np.testing.assert_allclose(d, d.T)
        np.testing.assert_allclose(np.diag(d), 1.0)
        assert np.all(d >= 0) and np.all(d <= 1)

    def test_edge_weights_are_mean_hyab(self):
        net = generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())
        for u, v, w in net.edges:
            assert w == pytest.approx(
                float(hyab(net.nodes[u].mean_lab, net.nodes[v].mean_lab)))

    def test_mean_color_is_srgb_mean_then_lab(self):
        net = generate_color_network(color_set(TOY_REDS), toy_params(n_intervals=(1, 1)))
        expected = srgb_to_lab(np.asarray(TOY_REDS, dtype=np.float64).mean(axis=0))
        np.testing.assert_allclose(net.nodes[0].mean_lab, expected)

    def test_deterministic_rebuild(self):
        cs = color_set(TOY_REDS + TOY_GREENS)
        a = generate_color_network(cs, toy_params()).dumps()
        b = generate_color_network(cs, toy_params()).dumps()
        assert a == b


class TestRegionsOf:
    @pytest.fixture
    def net(self):
        return generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())

    def test_sole_member(self, net):
        regions = net.regions_of((200, 0, 0))
        assert len(regions) == 1
        node = net.nodes[regions[0]]
        assert pack_srgb(np.array((200, 0, 0))) in node.members

    def test_total_on_arbitrary_colors(self, net):
        rng = np.random.default_rng(2)
        for rgb in rng.integers(0, 256, size=(25, 3)):
            assert len(net.regions_of(tuple(rgb))) >= 1

    def test_noise_color_maps_to_nearest_mean(self, net):
        rgb = (0, 0, 255)  # far from both toy groups, snaps to no member
        regions = net.regions_of(rgb)
        lab = srgb_to_lab(np.asarray(rgb, dtype=np.float64))
        dists = [float(hyab(lab, n.mean_lab)) for n in net.nodes]
        assert regions == (int(np.argmin(dists)),)

    def test_overlap_color_in_multiple_regions(self):
        # 1 chroma x 2 hue intervals with a big gain: colors near the hue
        # boundary belong to both cells and therefore both regions.
        shades = [(200, v, 0) for v in range(0, 240, 10)]
        net = generate_color_network(
            color_set(shades), toy_params(n_intervals=(1, 2), gains=(0.0, 0.5),
                                          eps=30.0, min_pts=2))
        multi = [rgb for rgb in shades if len(net.regions_of(rgb)) > 1]
        assert multi, "expected at least one color in the cover overlap"


class TestSerialization:
    def test_round_trip(self, tmp_path):
        net = generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())
        path = tmp_path / "net.txt"
        net.save(path)
        loaded = ColorNetwork.load(path)
        assert loaded.n_regions == net.n_regions
        assert loaded.grid_step == net.grid_step
        assert [tuple(e) for e in loaded.edges] == [tuple(e) for e in net.edges]
        for a, b in zip(loaded.nodes, net.nodes):
            assert np.array_equal(a.members, b.members)
            np.testing.assert_allclose(a.mean_lab, b.mean_lab)
        assert loaded.params == net.params

    def test_save_load_save_identical_bytes(self, tmp_path):
        net = generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        net.save(p1)
        ColorNetwork.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a network\n")
        with pytest.raises(ValueError):
            ColorNetwork.load(path)

    def test_regions_survive_round_trip(self, tmp_path):
        net = generate_color_network(color_set(TOY_REDS + TOY_GREENS), toy_params())
        path = tmp_path / "net.txt"
        net.save(path)
        loaded = ColorNetwork.load(path)
        for rgb in TOY_REDS + TOY_GREENS + [(1, 2, 3)]:
            assert loaded.regions_of(rgb) == net.regions_of(rgb)
