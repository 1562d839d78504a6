import json

import numpy as np
import pytest

from risdfrc.scene import (SceneConfig, build_scene, config_from_dict,
                           config_to_dict, desk_config, link_rng, los_steering,
                           paper_config, path_loss, rayleigh_channel,
                           save_config, load_config, without_ris)


class TestPathLoss:
    def test_reference_distance_any_exponent(self):
        for iota in (2.0, 2.8, 4.0):
            assert path_loss(1.0, iota) == pytest.approx(1e-3)

    def test_reference_gain_at_d0(self):
        assert path_loss(1.0, 2.0, c0=0.5, d0=1.0) == pytest.approx(0.5)

    def test_thirty_meters_exponent_three(self):
        assert path_loss(30.0, 3.0) == pytest.approx(3.7037e-8, rel=1e-4)

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            path_loss(0.0, 2.0)
        with pytest.raises(ValueError):
            path_loss(-1.0, 2.0)


class TestLosSteering:
    def test_broadside_all_ones(self):
        v = los_steering(0.0, 4, 1.0)
        np.testing.assert_allclose(v, np.ones(4))

    def test_endfire_alternates(self):
        v = los_steering(90.0, 2, 1.0)
        np.testing.assert_allclose(v, [1.0, np.exp(1j * np.pi)], atol=1e-12)

    def test_entry_magnitudes(self):
        g = 0.37
        v = los_steering(-50.0, 6, g)
        np.testing.assert_allclose(np.abs(v), np.sqrt(g) * np.ones(6), rtol=1e-12)


class TestRayleigh:
    def test_reproducible_under_seed(self):
        a = rayleigh_channel(link_rng(7, "x"), 4, 1.0)
        b = rayleigh_channel(link_rng(7, "x"), 4, 1.0)
        np.testing.assert_array_equal(a, b)

    def test_mean_power_matches_gain(self):
        rng = np.random.default_rng(3)
        v = rayleigh_channel(rng, 100_000, 0.25)
        assert np.mean(np.abs(v) ** 2) == pytest.approx(0.25, rel=0.02)

    def test_zero_gain_gives_zero_vector(self):
        v = rayleigh_channel(np.random.default_rng(0), 8, 0.0)
        np.testing.assert_array_equal(v, np.zeros(8))

    def test_prefix_stable_in_length(self):
        long = rayleigh_channel(link_rng(5, "u"), 32, 1.0)
        short = rayleigh_channel(link_rng(5, "u"), 16, 1.0)
        np.testing.assert_array_equal(long[:16], short)


class TestBuildScene:
    def test_paper_dims(self):
        ch = build_scene(paper_config(seed=4))
        assert ch.h_t.shape == (6,)
        assert ch.h_rt.shape == (64,)
        assert ch.G.shape == (64, 6)
        assert len(ch.h_c) == 3 and len(ch.h_user) == 3
        assert ch.A[0].shape == (6, 6) and ch.B[0].shape == (64, 6)

    def test_no_ris_variant_zeroes_reflected(self):
        ch = without_ris(build_scene(desk_config(seed=2)))
        for B in (*ch.B, *ch.B_user):
            assert not np.any(B)

    def test_b_entries_elementwise(self, rng):
        ch = build_scene(desk_config(seed=9))
        for q, hr in enumerate((ch.h_rt, *ch.h_rc)):
            for n in range(ch.config.N):
                for m in range(ch.config.M):
                    assert ch.B[q][n, m] == pytest.approx(np.conj(hr[n]) * ch.G[n, m])

    def test_rank_one_hermitian_A(self):
        ch = build_scene(desk_config(seed=11))
        for q, h in enumerate(ch.direct):
            A = ch.A[q]
            np.testing.assert_allclose(A, A.conj().T, atol=1e-15)
            assert np.linalg.matrix_rank(A) <= 1
            assert np.trace(A).real == pytest.approx(np.linalg.norm(h) ** 2)

    def test_same_seed_bit_identical(self):
        a = build_scene(desk_config(seed=123))
        b = build_scene(desk_config(seed=123))
        assert a.content_hash() == b.content_hash()
        np.testing.assert_array_equal(a.G, b.G)

    def test_adding_user_preserves_radar_links(self):
        base = desk_config(seed=6)
        more = base.with_updates(K=3, sigma2_k=(1e-11,) * 3,
                                 Gamma_k=(10.0,) * 3, d_k=(30.0,) * 3,
                                 d_rk=(3.0,) * 3)
        a, b = build_scene(base), build_scene(more)
        np.testing.assert_array_equal(a.h_t, b.h_t)
        np.testing.assert_array_equal(a.G, b.G)
        np.testing.assert_array_equal(a.h_user[0], b.h_user[0])

    def test_channel_mean_power_matches_path_loss(self):
        # 1e5 draws from the identical user-link stream at the scene's gain
        cfg = desk_config(seed=31)
        ch = build_scene(cfg)
        target = path_loss(cfg.d_k[0], cfg.iota_k)
        stream = rayleigh_channel(link_rng(cfg.seed, "h_user:0"), 100_000, target)
        np.testing.assert_array_equal(stream[:cfg.M], ch.h_user[0])
        assert np.mean(np.abs(stream) ** 2) == pytest.approx(target, rel=0.02)

    def test_los_power_exact(self):
        ch = build_scene(desk_config(seed=14))
        cfg = ch.config
        np.testing.assert_allclose(np.abs(ch.h_t) ** 2,
                                   path_loss(cfg.d_t, cfg.iota_t), rtol=1e-12)
        np.testing.assert_allclose(np.abs(ch.G) ** 2,
                                   path_loss(cfg.d_G, cfg.iota_G), rtol=1e-12)

    def test_n_prefix_stability(self):
        small = build_scene(desk_config(seed=21, N=8))
        large = build_scene(desk_config(seed=21, N=16))
        np.testing.assert_array_equal(large.h_ruser[0][:8], small.h_ruser[0])
        np.testing.assert_array_equal(large.h_t, small.h_t)


class TestConfigValidation:
    def test_rejects_bad_omega(self):
        with pytest.raises(ValueError):
            SceneConfig(Omega=3)

    def test_rejects_clutter_bin_out_of_range(self):
        with pytest.raises(ValueError):
            desk_config(clutter_pos=((9, 0.0), (0, 1.0)))

    def test_rejects_wrong_user_lengths(self):
        with pytest.raises(ValueError):
            desk_config(K=3)


class TestConfigIO:
    def test_roundtrip(self, tmp_path):
        cfg = paper_config(seed=5)
        path = tmp_path / "scene.json"
        save_config(cfg, path)
        back = load_config(path)
        assert back == cfg

    def test_db_fields_in_file(self, tmp_path):
        cfg = paper_config()
        data = config_to_dict(cfg)
        assert data["P_dBW"] == pytest.approx(20.0)
        assert data["sigma2_z_dBm"] == pytest.approx(-80.0)
        assert data["C0_dB"] == pytest.approx(-30.0)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            config_from_dict({"M": 4, "bogus": 1})
