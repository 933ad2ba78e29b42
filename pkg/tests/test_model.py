from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fouriergnn.model import (
    FfnHead,
    FgoLayer,
    FourierGNN,
    ModelConfig,
    MtsWindow,
    build_hypervariate,
    count_parameters,
    embed_nodes,
    export_adjacency,
    ffn_project,
    fgo_forward,
    forward_trace,
    load_checkpoint,
    marginalize_time_adjacency,
    model_forward,
    node_representation,
    save_checkpoint,
)
from fouriergnn.oracle import GreenKernelGso, TimeDomainLayer, time_domain_multi_order
from fouriergnn.spectral import IDENTITY, SPLIT_RELU, Activation, dft_nodes, idft_nodes

COVID = ModelConfig(n_vars=55, n_steps=12, horizon=12, embed_dim=256, n_layers=3, reduce_dim=8,
                    ffn_dim1=256, ffn_dim2=512)


def identity_layers(k, d):
    return [FgoLayer(np.eye(d, dtype=complex), np.zeros(d, complex)) for _ in range(k)]


def random_layers(k, d, rng, bias=True):
    return [FgoLayer(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)),
                     (rng.normal(size=d) + 1j * rng.normal(size=d)) if bias else np.zeros(d, complex))
            for _ in range(k)]


class TestHypervariate:
    def test_layout(self):
        g = build_hypervariate(MtsWindow([[1, 2], [3, 4]], [[0], [0]]))
        np.testing.assert_array_equal(g.node_features[:, 0], [1, 2, 3, 4])
        assert (g.n_vars, g.n_steps, g.n_nodes) == (2, 2, 4)

    def test_single_node(self):
        g = build_hypervariate(np.array([[3.5]]))
        assert g.node_features.shape == (1, 1) and g.node_features[0, 0] == 3.5

    def test_three_series_of_twelve_steps(self):
        assert build_hypervariate(np.zeros((3, 12))).n_nodes == 36

    @pytest.mark.parametrize("n_vars, n_steps", [(1, 1), (2, 3), (3, 2), (4, 5)])
    def test_layout_round_trip(self, n_vars, n_steps):
        x = np.arange(n_vars * n_steps, dtype=float).reshape(n_vars, n_steps)
        feats = build_hypervariate(x).node_features[:, 0]
        for v in range(n_vars):
            for s in range(n_steps):
                assert feats[v * n_steps + s] == x[v, s]
        np.testing.assert_array_equal(feats.reshape(n_vars, n_steps), x)

    def test_window_validation(self):
        with pytest.raises(ValueError):
            MtsWindow(np.zeros((2, 3)), np.zeros((3, 1)))
        with pytest.raises(ValueError, match="non-finite"):
            MtsWindow(np.array([[np.nan]]), np.zeros((1, 1)))


class TestEmbed:
    def test_scalar_broadcast(self):
        np.testing.assert_array_equal(embed_nodes(np.array([[2.0]]), np.array([1.0, -1.0])), [[2, -2]])

    def test_zero_features(self):
        np.testing.assert_array_equal(embed_nodes(np.zeros((3, 1)), np.array([1.0, 2.0])), 0)

    def test_against_loops(self, rng):
        feats = rng.normal(size=(4, 1))
        e = rng.normal(size=3)
        ref = np.empty((4, 3))
        for i in range(4):
            for j in range(3):
                ref[i, j] = feats[i, 0] * e[j]
        np.testing.assert_array_equal(embed_nodes(feats, e), ref)


class TestFgoForward:
    def test_single_identity_layer_doubles(self, rng):
        x = rng.normal(size=(6, 3))
        out = fgo_forward(x, identity_layers(1, 3), IDENTITY)
        np.testing.assert_allclose(out, 2 * dft_nodes(x), atol=1e-12)

    def test_three_identity_layers(self, rng):
        x = rng.normal(size=(6, 3))
        out = fgo_forward(x, identity_layers(3, 3), IDENTITY)
        np.testing.assert_allclose(out, 4 * dft_nodes(x), atol=1e-12)

    def test_matches_time_domain_for_space_invariant_kernels(self, rng):
        n, d = 8, 3
        x = rng.uniform(-1, 1, (n, d))
        coeffs = rng.uniform(-1, 1, 2)
        weights = [rng.uniform(-1, 1, (d, d)) for _ in range(2)]
        td = []
        for c, w in zip(coeffs, weights):
            kernel = np.zeros(n)
            kernel[0] = c
            td.append(TimeDomainLayer(GreenKernelGso(kernel), w))
        layers = [FgoLayer((c * w).astype(complex), np.zeros(d, complex)) for c, w in zip(coeffs, weights)]
        got = idft_nodes(fgo_forward(x, layers, IDENTITY))
        a1, a2 = coeffs[0] * np.eye(n), coeffs[1] * np.eye(n)
        expected = x + a1 @ x @ weights[0] + a2 @ a1 @ x @ weights[0] @ weights[1]
        assert np.max(np.abs(got - expected)) < 1e-8
        assert np.max(np.abs(got - time_domain_multi_order(x, td))) < 1e-8

    def test_default_form_by_hand(self, rng):
        x = rng.normal(size=(5, 2))
        layers = random_layers(3, 2, rng)
        p = dft_nodes(x)
        expected = p.copy()
        prod = p
        for layer in layers:
            prod = prod @ layer.weight
            z = prod + layer.bias
            expected += np.maximum(z.real, 0) + 1j * np.maximum(z.imag, 0)
        np.testing.assert_allclose(fgo_forward(x, layers, SPLIT_RELU), expected, atol=1e-12)

    def test_recursive_form_by_hand(self, rng):
        x = rng.normal(size=(5, 2))
        layers = random_layers(3, 2, rng)
        h = dft_nodes(x)
        expected = h.copy()
        for layer in layers:
            z = h @ layer.weight + layer.bias
            h = np.maximum(z.real, 0) + 1j * np.maximum(z.imag, 0)
            expected += h
        np.testing.assert_allclose(fgo_forward(x, layers, SPLIT_RELU, recursive=True), expected, atol=1e-12)

    def test_forms_agree_when_linear(self, rng):
        x = rng.normal(size=(7, 3))
        layers = random_layers(3, 3, rng, bias=False)
        np.testing.assert_allclose(fgo_forward(x, layers, IDENTITY, recursive=True),
                                   fgo_forward(x, layers, IDENTITY), atol=1e-10)

    def test_forms_differ_with_relu(self, rng):
        x = rng.normal(size=(7, 3))
        layers = random_layers(3, 3, rng)
        assert not np.allclose(fgo_forward(x, layers, SPLIT_RELU, recursive=True),
                               fgo_forward(x, layers, SPLIT_RELU))

    def test_residual_decomposition(self, rng):
        x = rng.normal(size=(9, 2))
        layers = random_layers(3, 2, rng, bias=False)
        full = fgo_forward(x, layers, IDENTITY)
        no_res = fgo_forward(x, layers, IDENTITY, residual=False)
        np.testing.assert_allclose(full - no_res, dft_nodes(x), atol=1e-12)

    def test_no_summation_keeps_last_term(self, rng):
        x = rng.normal(size=(9, 2))
        layers = random_layers(3, 2, rng, bias=False)
        p = dft_nodes(x)
        expected = p @ layers[0].weight @ layers[1].weight @ layers[2].weight
        np.testing.assert_allclose(fgo_forward(x, layers, IDENTITY, summation=False), expected, atol=1e-10)

    @given(st.floats(-5, 5), st.integers(0, 2**31))
    def test_scale_homogeneity(self, c, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(6, 2))
        layers = random_layers(2, 2, rng, bias=False)
        lhs = fgo_forward(c * x, layers, IDENTITY)
        rhs = c * fgo_forward(x, layers, IDENTITY)
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="layer 0"):
            fgo_forward(rng.normal(size=(4, 3)), identity_layers(1, 2), IDENTITY)
        with pytest.raises(ValueError):
            fgo_forward(rng.normal(size=(4, 3)), [], IDENTITY)


def loop_head(y, head, n_vars):
    """Reference FFN head written with explicit loops."""
    n_nodes, d = y.shape
    n_steps = n_nodes // n_vars
    r = head.time_reduce if head.time_reduce is not None else np.eye(n_steps)
    l = r.shape[1]
    out = np.zeros((n_vars, head.w3.shape[1]))
    lrelu = lambda v: v if v >= 0 else head.leaky_slope * v
    for v in range(n_vars):
        flat = np.zeros(l * d)
        for j in range(l):
            for f in range(d):
                acc = 0.0
                for s in range(n_steps):
                    acc += y[v * n_steps + s, f] * r[s, j]
                flat[j * d + f] = acc
        x1 = [lrelu(sum(flat[i] * head.w1[i, a] for i in range(l * d)) + head.b1[a]) for a in range(head.w1.shape[1])]
        x2 = [lrelu(sum(x1[i] * head.w2[i, a] for i in range(len(x1))) + head.b2[a]) for a in range(head.w2.shape[1])]
        for t in range(head.w3.shape[1]):
            out[v, t] = sum(x2[i] * head.w3[i, t] for i in range(len(x2))) + head.b3[t]
    return out


class TestFfn:
    def test_zero_in_zero_out(self, rng):
        head = FfnHead(rng.normal(size=(4, 3)), np.zeros(3), rng.normal(size=(3, 3)), np.zeros(3),
                       rng.normal(size=(3, 2)), np.zeros(2), time_reduce=rng.normal(size=(4, 2)))
        np.testing.assert_array_equal(ffn_project(np.zeros((8, 2)), head, 2), 0)

    def test_identity_head_passes_input_through(self, rng):
        n_vars, n_steps, d = 2, 3, 2
        k = n_steps * d
        head = FfnHead(np.eye(k), np.zeros(k), np.eye(k), np.zeros(k), np.eye(k), np.zeros(k))
        y = rng.uniform(0, 1, (n_vars * n_steps, d))
        np.testing.assert_allclose(ffn_project(y, head, n_vars), y.reshape(n_vars, k))

    def test_against_loops(self, rng):
        head = FfnHead(rng.normal(size=(4, 2)), rng.normal(size=2), rng.normal(size=(2, 2)), rng.normal(size=2),
                       rng.normal(size=(2, 1)), rng.normal(size=1), time_reduce=rng.normal(size=(3, 2)))
        y = rng.normal(size=(6, 2))
        np.testing.assert_allclose(ffn_project(y, head, 2), loop_head(y, head, 2), rtol=1e-12, atol=1e-12)

    def test_shape_mismatch(self, rng):
        head = FfnHead(rng.normal(size=(5, 2)), np.zeros(2), rng.normal(size=(2, 2)), np.zeros(2),
                       rng.normal(size=(2, 1)), np.zeros(1))
        with pytest.raises(ValueError):
            ffn_project(rng.normal(size=(6, 2)), head, 2)


class TestModelForward:
    def test_zero_window(self):
        cfg = ModelConfig(n_vars=3, n_steps=4, horizon=2, embed_dim=3, n_layers=2, reduce_dim=2,
                          ffn_dim1=4, ffn_dim2=4)
        model = FourierGNN.init(cfg, 0)
        np.testing.assert_array_equal(model_forward(model, np.zeros((3, 4))), 0)

    def test_composition_contract(self, rng):
        cfg = ModelConfig(n_vars=2, n_steps=3, horizon=2, embed_dim=2, n_layers=1, ffn_dim1=3, ffn_dim2=3,
                          activation="identity")
        model = FourierGNN.init(cfg, 1)
        model.params["fgo.0.weight"] = np.eye(2, dtype=complex)
        window = MtsWindow(rng.normal(size=(2, 3)), np.zeros((2, 2)))
        emb = embed_nodes(build_hypervariate(window), model.embedding)
        expected = ffn_project(2 * emb, model.head, 2)
        np.testing.assert_allclose(model_forward(model, window), expected, atol=1e-12)
        composed = ffn_project(idft_nodes(fgo_forward(emb, model.layers, IDENTITY)).real, model.head, 2)
        np.testing.assert_allclose(model_forward(model, window), composed, atol=1e-12)

    def test_batch_matches_single(self, small_model, rng):
        x = rng.normal(size=(5, 3, 4))
        batch = small_model.predict(x)
        for b in range(5):
            np.testing.assert_allclose(batch[b], model_forward(small_model, x[b]), atol=1e-12)

    def test_wrong_window_shape(self, small_model):
        with pytest.raises(ValueError, match="does not match"):
            model_forward(small_model, np.zeros((2, 4)))

    def test_planar_mode_runs(self, rng):
        cfg = ModelConfig(n_vars=3, n_steps=4, horizon=2, embed_dim=2, n_layers=2, ffn_dim1=3, ffn_dim2=3,
                          dft_mode="planar_2d")
        model = FourierGNN.init(cfg, 0)
        flat = FourierGNN(replace(cfg, dft_mode="flat_1d"), model.params)
        x = rng.normal(size=(3, 4))
        assert model_forward(model, x).shape == (3, 2)
        assert not np.allclose(model_forward(model, x), model_forward(flat, x))


class TestParameterCount:
    def test_covid_configuration(self):
        d = 256
        enumerated = d + 3 * (2 * d * d + 2 * d) + 12 * 8 + 2048 * 256 + 256 + 256 * 512 + 512 + 512 * 12 + 12
        assert enumerated == 1_057_388
        assert count_parameters(COVID) == 1_057_388
        assert abs(count_parameters(COVID) - 1.06e6) / 1.06e6 < 0.02

    def test_model_tensor_sizes_agree(self):
        model = FourierGNN.init(COVID, 0)
        total = sum(v.size * (2 if np.iscomplexobj(v) else 1) for v in model.params.values())
        assert total == model.n_parameters() == 1_057_388

    @given(st.integers(1, 5), st.integers(1, 6), st.integers(1, 4), st.integers(1, 5), st.integers(1, 3),
           st.integers(1, 6), st.integers(1, 6), st.booleans())
    def test_closed_form(self, n_vars, n_steps, horizon, d, k, f1, f2, reduce):
        l = max(1, n_steps - 1) if reduce else None
        cfg = ModelConfig(n_vars=n_vars, n_steps=n_steps, horizon=horizon, embed_dim=d, n_layers=k,
                          reduce_dim=l, ffn_dim1=f1, ffn_dim2=f2)
        steps = l if l is not None else n_steps
        tr = n_steps * l if (l is not None and l < n_steps) else 0
        expected = d + k * (2 * d * d + 2 * d) + tr + steps * d * f1 + f1 + f1 * f2 + f2 + f2 * horizon + horizon
        assert count_parameters(cfg) == expected

    def test_shared_fgo_counts_once(self):
        shared = replace(COVID, shared_fgo=True)
        assert count_parameters(COVID) - count_parameters(shared) == 2 * (2 * 256 * 256 + 2 * 256)


class TestAdjacency:
    def test_duplicate_unit_rows(self):
        np.testing.assert_array_equal(export_adjacency(np.array([[0.0, 1.0], [0.0, 1.0]])), np.ones((2, 2)))

    def test_orthogonal_rows(self):
        a = export_adjacency(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(a, np.eye(2))

    def test_against_loops(self, rng):
        y = rng.normal(size=(6, 3))
        gram = np.empty((6, 6))
        for i in range(6):
            for j in range(6):
                gram[i, j] = sum(y[i, k] * y[j, k] for k in range(3))
        np.testing.assert_allclose(export_adjacency(y), gram / gram.max(), rtol=1e-14)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            export_adjacency(np.zeros((3, 2)))

    def test_size_cap(self):
        with pytest.raises(ValueError, match="cap"):
            export_adjacency(np.ones((10, 1)), max_nodes=5)

    def test_marginalize_t1(self, rng):
        a = rng.normal(size=(3, 3))
        np.testing.assert_array_equal(marginalize_time_adjacency(a, 3, 1), a)

    def test_marginalize_constant(self):
        np.testing.assert_allclose(marginalize_time_adjacency(np.full((6, 6), 0.25), 2, 3), np.full((2, 2), 0.25))

    def test_marginalize_against_loops(self, rng):
        a = rng.normal(size=(4, 4))
        ref = np.zeros((2, 2))
        for u in range(2):
            for v in range(2):
                ref[u, v] = (a[u * 2, v * 2] + a[u * 2, v * 2 + 1] + a[u * 2 + 1, v * 2] + a[u * 2 + 1, v * 2 + 1]) / 4
        np.testing.assert_allclose(marginalize_time_adjacency(a, 2, 2), ref, rtol=1e-14)

    def test_marginalize_shape_mismatch(self):
        with pytest.raises(ValueError):
            marginalize_time_adjacency(np.zeros((5, 5)), 2, 2)

    def test_from_model(self, small_model, rng):
        a = export_adjacency(node_representation(small_model, rng.normal(size=(3, 4))))
        assert a.shape == (12, 12) and a.max() == 1.0
        np.testing.assert_allclose(a, a.T)


class TestCheckpoint:
    def test_round_trip(self, small_model, tmp_path, rng):
        path = save_checkpoint(small_model, tmp_path / "m.npz", extra={"note": "x"})
        loaded, extra = load_checkpoint(path)
        assert extra == {"note": "x"}
        assert loaded.equals(small_model)
        x = rng.normal(size=(4, 3, 4))
        np.testing.assert_array_equal(loaded.predict(x), small_model.predict(x))

    def test_shared_model_round_trip(self, tmp_path):
        cfg = ModelConfig(n_vars=2, n_steps=3, horizon=1, embed_dim=2, n_layers=3, ffn_dim1=2, ffn_dim2=2,
                          shared_fgo=True)
        model = FourierGNN.init(cfg, 0)
        loaded, _ = load_checkpoint(save_checkpoint(model, tmp_path / "s.npz"))
        assert loaded.layers[0].weight is loaded.layers[2].weight

    def test_archive_is_self_describing(self, small_model, tmp_path):
        import json
        path = save_checkpoint(small_model, tmp_path / "m.npz")
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            assert data["fgo.0.weight.real"].dtype == np.float64
            assert data["head.w1"].dtype == np.float64
        assert meta["format"] == "fouriergnn-checkpoint/1"
        assert meta["config"]["n_vars"] == 3
        assert {t["name"] for t in meta["tensors"]} == set(small_model.params)

    def test_rejects_mismatched_tensors(self, small_model):
        params = dict(small_model.params)
        params["head.w1"] = np.zeros((1, 1))
        with pytest.raises(ValueError, match="head.w1"):
            FourierGNN(small_model.config, params)


class TestConfigValidation:
    @pytest.mark.parametrize("field, value", [("embed_dim", 0), ("n_layers", 0), ("reduce_dim", 20),
                                              ("dft_mode", "3d"), ("leaky_slope", 2.0), ("activation", "gelu")])
    def test_rejects(self, field, value):
        with pytest.raises(ValueError):
            replace(ModelConfig(n_vars=2), **{field: value})

    def test_no_embedding_requires_unit_width(self):
        with pytest.raises(ValueError, match="embed_dim"):
            ModelConfig(n_vars=2, use_embedding=False, embed_dim=4)

    def test_trace_keeps_intermediates(self, small_model, rng):
        tr = forward_trace(small_model, rng.normal(size=(2, 3, 4)))
        assert tr["p0"].shape == (2, 12, 3) and len(tr["pre"]) == 3
        assert tr["pred"].shape == (2, 3, 2)
