import numpy as np
import pytest

from coverduals import comms, lpac
from coverduals.lpac import (
    LpacPolicy,
    WeightBundle,
    architecture,
    build_observation,
    cnn_forward,
    export_imitation_dataset,
    gnn_forward,
    load_imitation_dataset,
    mlp_forward,
    shift_from_edges,
)
from coverduals.world import World, combined_field

from conftest import tiny_config


def conv3x3_oracle(x, weight, bias):
    """Direct triple-loop 3x3 same convolution with zero padding."""
    c, h, w = x.shape
    out_ch = weight.shape[0]
    out = np.zeros((out_ch, h, w))
    for o in range(out_ch):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for ci in range(c):
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += weight[o, ci, di, dj] * x[ci, ii, jj]
                out[o, i, j] = acc + bias[o]
    return out


class TestWeightBundle:
    def test_round_trip_is_byte_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        bundle = WeightBundle.random(rng)
        path = tmp_path / "w.bundle"
        bundle.save(path)
        again = WeightBundle.load(path)
        for name in architecture():
            assert np.array_equal(bundle[name], again[name])
        path2 = tmp_path / "w2.bundle"
        again.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_missing_tensor_rejected(self):
        tensors = WeightBundle.random(np.random.default_rng(0)).tensors
        del tensors["mlp1_bias"]
        with pytest.raises(ValueError, match="mlp1_bias"):
            WeightBundle(tensors)

    def test_wrong_shape_rejected(self):
        tensors = WeightBundle.random(np.random.default_rng(0)).tensors
        tensors["action_weight"] = np.zeros((3, 32), dtype=np.float32)
        with pytest.raises(ValueError, match="action_weight"):
            WeightBundle(tensors)

    def test_nonpositive_variance_rejected(self):
        tensors = WeightBundle.random(np.random.default_rng(0)).tensors
        tensors["norm2_var"] = np.zeros(32, dtype=np.float32)
        with pytest.raises(ValueError, match="norm2_var"):
            WeightBundle(tensors)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"NOT-A-BUNDLE 1\nend\n")
        with pytest.raises(ValueError, match="not a weight bundle"):
            WeightBundle.load(path)

    def test_bad_version_rejected(self, tmp_path):
        rng = np.random.default_rng(1)
        path = tmp_path / "w.bundle"
        WeightBundle.random(rng).save(path)
        data = path.read_bytes().replace(b"WEIGHTS 1", b"WEIGHTS 9", 1)
        path.write_bytes(data)
        with pytest.raises(ValueError, match="version"):
            WeightBundle.load(path)


class TestObservation:
    def test_shape_and_density_normalization(self):
        world = World.from_config(tiny_config())
        world.sense_all()
        field = combined_field(world.fields, np.array([0.5, 0.5]))
        obs = build_observation(world.robots[0], field,
                                np.empty((0, 2)), world.config)
        assert obs.shape == (4, 32, 32)
        # own density channel is scaled by its own maximum
        assert obs[0].max() == pytest.approx(1.0)
        assert obs[0].min() >= 0.0
        # no neighbors: coordinate channels stay zero
        assert not obs[2].any() and not obs[3].any()

    def test_boundary_channel_pools_edge_cells(self):
        config = tiny_config()
        world = World.from_config(config)
        world.sense_all()
        field = combined_field(world.fields, np.array([0.5, 0.5]))
        robot = world.robots[0]
        obs = build_observation(robot, field, np.empty((0, 2)), config)
        # oracle: re-pool the boundary map by hand over the same window
        n = config.grid_cells
        cx = min(int(robot.position[0]), n - 1)
        cy = min(int(robot.position[1]), n - 1)
        patch = np.zeros((256, 256))
        x0, x1 = max(0, cx - 128), min(n, cx + 128)
        y0, y1 = max(0, cy - 128), min(n, cy + 128)
        ox, oy = x0 - (cx - 128), y0 - (cy - 128)
        patch[ox:ox + (x1 - x0), oy:oy + (y1 - y0)] = robot.boundary[x0:x1, y0:y1]
        expected = patch.reshape(32, 8, 32, 8).mean(axis=(1, 3))
        assert np.allclose(obs[1], expected)

    def test_neighbor_raster_pixel_and_value(self):
        config = tiny_config(env_size=512.0, comm_radius=100.0, num_robots=2)
        world = World.from_config(config)
        world.sense_all()
        field = combined_field(world.fields, np.array([0.5, 0.5]))
        robot = world.robots[0]
        robot.position[:] = (200.0, 200.0)
        # neighbor half a radius to the east: pixel (16 + 8, 16), value (0.5, 0)
        neighbor = np.array([[250.0, 200.0]])
        obs = build_observation(robot, field, neighbor, config)
        assert obs[2, 24, 16] == pytest.approx(0.5)
        assert obs[3, 24, 16] == pytest.approx(0.0)
        assert np.count_nonzero(obs[2]) == 1

    def test_raster_collision_keeps_nearest(self):
        config = tiny_config(env_size=512.0, comm_radius=100.0, num_robots=3)
        world = World.from_config(config)
        world.sense_all()
        field = combined_field(world.fields, np.array([0.5, 0.5]))
        robot = world.robots[0]
        robot.position[:] = (200.0, 200.0)
        # both map to pixel (24, 16); the 49-away neighbor should win
        neighbors = np.array([[251.0, 200.0], [249.0, 200.0]])
        obs = build_observation(robot, field, neighbors, config)
        assert obs[2, 24, 16] == pytest.approx(0.49)

    def test_raster_clipped_to_image(self):
        config = tiny_config(env_size=512.0, comm_radius=100.0, num_robots=2)
        world = World.from_config(config)
        world.sense_all()
        field = combined_field(world.fields, np.array([0.5, 0.5]))
        robot = world.robots[0]
        robot.position[:] = (200.0, 200.0)
        # exactly at the radius: 16 + 16 = 32 clips to pixel 31
        neighbor = np.array([[300.0, 200.0]])
        obs = build_observation(robot, field, neighbor, config)
        assert obs[2, 31, 16] == pytest.approx(1.0)


class TestCnn:
    def test_conv_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 4, 4))
        weight = rng.standard_normal((3, 2, 3, 3))
        bias = rng.standard_normal(3)
        got = lpac._conv3x3(x, weight, bias)
        assert np.allclose(got, conv3x3_oracle(x, weight, bias), atol=1e-12)

    def test_identity_kernel_passes_input_through(self):
        x = np.arange(16.0).reshape(1, 4, 4)
        weight = np.zeros((1, 1, 3, 3))
        weight[0, 0, 1, 1] = 1.0
        out = lpac._conv3x3(x, weight, np.zeros(1))
        assert np.allclose(out, x)

    def test_forward_shape_and_stored_statistics(self):
        rng = np.random.default_rng(5)
        bundle = WeightBundle.random(rng, scale=0.5)
        obs = rng.random((4, 32, 32))
        feat = cnn_forward(obs, bundle)
        assert feat.shape == (32,)
        assert np.all(np.isfinite(feat))
        # inference-mode normalization: shifting the stored mean shifts the
        # output, proving batch statistics are not recomputed
        shifted = dict(bundle.tensors)
        shifted["norm1_mean"] = bundle["norm1_mean"] + np.float32(1.0)
        feat2 = cnn_forward(obs, WeightBundle(shifted))
        assert not np.allclose(feat, feat2)


def path_shift(n):
    edges = np.array([(i, i + 1) for i in range(n - 1)])
    return shift_from_edges(n, edges)


class TestGnn:
    def test_matches_dense_power_expansion(self):
        rng = np.random.default_rng(2)
        bundle = WeightBundle.random(rng, scale=0.2)
        n = 6
        shift = path_shift(n)
        x = rng.standard_normal((n, 32))
        got = gnn_forward(x, shift, bundle)
        # oracle: materialize S^k explicitly
        ref = x.copy()
        for layer in range(1, 6):
            taps = bundle[f"gnn{layer}_weight"].astype(np.float64)
            z = np.zeros((n, taps.shape[2]))
            for k in range(4):
                z += np.linalg.matrix_power(shift, k) @ ref @ taps[k]
            ref = np.maximum(z, 0.0)
        assert np.allclose(got, ref, atol=1e-9)

    def test_empty_graph_uses_only_self_taps(self):
        rng = np.random.default_rng(4)
        bundle = WeightBundle.random(rng, scale=0.2)
        x = rng.standard_normal((3, 32))
        got = gnn_forward(x, np.zeros((3, 3)), bundle)
        ref = x.copy()
        for layer in range(1, 6):
            taps = bundle[f"gnn{layer}_weight"].astype(np.float64)
            ref = np.maximum(ref @ taps[0], 0.0)
        assert np.allclose(got, ref)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        bundle = WeightBundle.random(rng, scale=0.2)
        n = 5
        shift = path_shift(n)
        x = rng.standard_normal((n, 32))
        perm = rng.permutation(n)
        base = gnn_forward(x, shift, bundle)
        permuted = gnn_forward(x[perm], shift[np.ix_(perm, perm)], bundle)
        assert np.allclose(permuted, base[perm], atol=1e-9)

    def test_two_node_path_hand_expansion(self):
        # S = [[0,1],[1,0]] for a connected pair, so S^2 = I and S^3 = S
        rng = np.random.default_rng(9)
        bundle = WeightBundle.random(rng, scale=0.2)
        shift = shift_from_edges(2, np.array([[0, 1]]))
        assert np.allclose(shift, [[0, 1], [1, 0]])
        x = rng.standard_normal((2, 32))
        ref = x
        for layer in range(1, 6):
            t = bundle[f"gnn{layer}_weight"].astype(np.float64)
            sref = shift @ ref
            z = ref @ (t[0] + t[2]) + sref @ (t[1] + t[3])
            ref = np.maximum(z, 0.0)
        assert np.allclose(gnn_forward(x, shift, bundle), ref, atol=1e-9)

    def test_information_stays_within_fifteen_hops(self):
        # 5 layers x 3 hops: node 0 sees at most 15 hops down a path
        rng = np.random.default_rng(8)
        # nonnegative taps and inputs keep every activation positive, so a
        # positive bump at 15 hops must strictly raise node 0's output
        tensors = WeightBundle.random(rng, scale=0.3).tensors
        for name in tensors:
            if name.startswith("gnn"):
                tensors[name] = np.abs(tensors[name])
        bundle = WeightBundle(tensors)
        n = 17
        shift = path_shift(n)
        x = rng.random((n, 32))
        base = gnn_forward(x, shift, bundle)
        far = x.copy()
        far[16] += 10.0  # 16 hops from node 0
        assert np.array_equal(gnn_forward(far, shift, bundle)[0], base[0])
        near = x.copy()
        near[15] += 10.0  # exactly 15 hops: still visible
        assert np.all(gnn_forward(near, shift, bundle)[0] > base[0])

    def test_feature_width_mismatch_rejected(self):
        bundle = WeightBundle.random(np.random.default_rng(0))
        with pytest.raises(ValueError, match="feature width"):
            gnn_forward(np.zeros((3, 16)), np.zeros((3, 3)), bundle)

    def test_node_count_mismatch_rejected(self):
        bundle = WeightBundle.random(np.random.default_rng(0))
        with pytest.raises(ValueError, match="per graph node"):
            gnn_forward(np.zeros((3, 32)), np.zeros((4, 4)), bundle)


class TestMlp:
    def test_zero_weights_give_bias(self):
        tensors = WeightBundle.random(np.random.default_rng(0)).tensors
        tensors["action_weight"] = np.zeros((2, 32), dtype=np.float32)
        tensors["action_bias"] = np.array([0.25, -0.5], dtype=np.float32)
        bundle = WeightBundle(tensors)
        out = mlp_forward(np.random.default_rng(1).random((3, 512)), bundle)
        assert np.allclose(out, [[0.25, -0.5]] * 3)

    def test_batch_matches_single_rows(self):
        rng = np.random.default_rng(7)
        bundle = WeightBundle.random(rng, scale=0.3)
        x = rng.standard_normal((4, 512))
        batch = mlp_forward(x, bundle)
        rows = np.stack([mlp_forward(row, bundle) for row in x])
        assert np.allclose(batch, rows, atol=1e-12)


class TestPolicy:
    def test_actions_shape_speed_and_determinism(self):
        world = World.from_config(tiny_config())
        world.sense_all()
        bundle = WeightBundle.random(np.random.default_rng(12), scale=0.3)
        policy = LpacPolicy(bundle)
        lam = np.array([0.5, 0.5])
        actions = policy.compute_actions(world, lam)
        assert actions.shape == (4, 2)
        speeds = np.hypot(actions[:, 0], actions[:, 1])
        assert np.all(speeds <= world.config.max_speed + 1e-12)
        assert np.array_equal(actions, policy.compute_actions(world, lam))

    def test_matches_golden_trace(self):
        config = tiny_config(num_steps=10, dual_period=5)
        world = World.from_config(config)
        bundle = WeightBundle.random(np.random.default_rng(21), scale=0.5)
        policy = LpacPolicy(bundle)
        lam = np.array([0.5, 0.5])
        trace = np.empty((10, config.num_robots, 2))
        for step in range(10):
            world.sense_all()
            world.step(policy.compute_actions(world, lam))
            trace[step] = world.positions
        golden = np.load("tests/data/lpac_trace.npy")
        assert np.allclose(trace, golden, atol=1e-10)


class TestDataset:
    def test_export_and_load_round_trip(self, tmp_path):
        world = World.from_config(tiny_config())
        path = tmp_path / "imitation.dataset"
        export_imitation_dataset(world, steps=10, path=path)
        steps = load_imitation_dataset(path)
        assert len(steps) == 10
        for record in steps:
            assert record["observations"].shape == (4, 4, 32, 32)
            assert record["targets"].shape == (4, 2)
            speeds = np.hypot(record["targets"][:, 0], record["targets"][:, 1])
            assert np.all(speeds <= world.config.max_speed + 1e-6)
            # density and boundary channels are normalized fractions
            assert record["observations"][:, 0].max() <= 1.0 + 1e-6
            assert record["observations"][:, 1].max() <= 1.0 + 1e-6
            # relative coordinates never exceed one communication radius
            assert np.abs(record["observations"][:, 2:]).max() <= 1.0 + 1e-6

    def test_edges_match_stated_radius(self, tmp_path):
        world = World.from_config(tiny_config())
        path = tmp_path / "imitation.dataset"
        export_imitation_dataset(world, steps=3, path=path)
        # re-simulate to recover positions at each recorded step
        replay = World.from_config(tiny_config())
        field = combined_field(replay.fields, np.array([0.5, 0.5]))
        from coverduals.controllers import clairvoyant_cvt
        for record in load_imitation_dataset(path):
            replay.sense_all()
            graph = comms.build_graph(replay.positions,
                                      replay.config.comm_radius)
            assert np.array_equal(record["edges"],
                                  np.array(graph.edges).reshape(-1, 2))
            targets = clairvoyant_cvt(replay.positions, field, replay.config)
            assert np.allclose(record["targets"], targets, atol=1e-6)
            replay.step(targets)

    def test_reexport_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        export_imitation_dataset(World.from_config(tiny_config()), 5, a)
        export_imitation_dataset(World.from_config(tiny_config()), 5, b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"WRONG 1\nend\n")
        with pytest.raises(ValueError, match="not a dataset"):
            load_imitation_dataset(path)


class TestShiftFromEdges:
    def test_matches_comms_operator(self):
        rng = np.random.default_rng(13)
        positions = rng.random((6, 2)) * 100
        graph = comms.build_graph(positions, 40.0)
        rebuilt = shift_from_edges(6, np.array(graph.edges).reshape(-1, 2))
        assert np.allclose(rebuilt, comms.shift_operator(graph))
