import numpy as np
import pytest

from pedbench.dataset import audit_leakage
from pedbench.errors import InvalidScript
from pedbench.io import instances_text
from pedbench.synth import (
    CorpusTemplate,
    Phase,
    ScenarioParams,
    apply_smoothing_artifact,
    generate_corpus,
    generate_scenario,
    scenarios_sidecar_text,
)
from pedbench.tracks import resample_track


def params(script, seed=0, noise=0.0, heading=0.0):
    return ScenarioParams(seed=seed, script=tuple(script), noise_sigma=noise, initial_heading=heading)


class TestGenerateScenario:
    def test_stand_is_motionless(self):
        track = generate_scenario(params([Phase("stand", 2.0)]))
        assert np.all(track.truth_positions == track.truth_positions[0])
        obs = track.observed.positions
        assert np.all(obs == obs[0])

    def test_walk_displacement_is_speed_times_time(self):
        track = generate_scenario(params([Phase("walk", 3.0, 1.4)]))
        np.testing.assert_allclose(track.truth_positions[-1], [4.2, 0.0], atol=1e-12)

    def test_walk_heading_rotates_displacement(self):
        track = generate_scenario(params([Phase("walk", 2.0, 1.0)], heading=np.pi / 2))
        np.testing.assert_allclose(track.truth_positions[-1], [0.0, 2.0], atol=1e-12)

    def test_same_seed_bitwise_identical(self):
        script = [Phase("stand", 1.5), Phase("accelerate", 0.5, 1.4), Phase("walk", 2.0, 1.4)]
        a = generate_scenario(params(script, seed=99, noise=0.05))
        b = generate_scenario(params(script, seed=99, noise=0.05))
        np.testing.assert_array_equal(a.truth_positions, b.truth_positions)
        np.testing.assert_array_equal(a.observed.positions, b.observed.positions)
        c = generate_scenario(params(script, seed=100, noise=0.05))
        assert not np.array_equal(a.observed.positions, c.observed.positions)

    def test_labels_consistent_with_truth_kinematics(self):
        script = [Phase("stand", 2.0), Phase("accelerate", 0.5, 1.4), Phase("walk", 2.0, 1.4)]
        track = generate_scenario(params(script))
        labels = np.array(track.mode_labels)
        assert np.all(track.truth_speeds[labels == "stand"] == 0.0)
        assert np.all(np.abs(track.truth_speeds[labels == "walk"] - 1.4) < 1e-12)
        ramp = track.truth_speeds[labels == "accelerate"]
        assert np.all(np.diff(ramp) > 0)

    def test_turn_phase_curves_the_path(self):
        track = generate_scenario(params([Phase("turn", 4.0, 1.0, turn_rate=0.5)]))
        displacement = track.truth_positions[-1]
        assert np.linalg.norm(displacement) < 4.0  # curved path ends closer than a straight one
        assert abs(displacement[1]) > 0.5

    def test_native_rate_subsampling(self):
        track = generate_scenario(params([Phase("walk", 3.0, 1.0)]))
        assert len(track.observed) == 7  # 2 Hz samples over 3 s inclusive
        assert track.observed.samples[1].timestamp_us == 500_000

    def test_invalid_scripts_rejected(self):
        with pytest.raises(InvalidScript):
            Phase("sprint", 1.0)
        with pytest.raises(InvalidScript):
            Phase("walk", 0.0, 1.0)
        with pytest.raises(InvalidScript):
            Phase("walk", 1.0, 9.0)
        with pytest.raises(InvalidScript):
            ScenarioParams(seed=0, script=())


class TestSmoothingArtifact:
    def test_constant_track_unchanged(self):
        track = generate_scenario(params([Phase("stand", 3.0)])).observed
        smoothed = apply_smoothing_artifact(track, window=3)
        np.testing.assert_array_equal(smoothed.positions, track.positions)

    def test_window_must_be_odd_and_at_least_three(self):
        track = generate_scenario(params([Phase("stand", 3.0)])).observed
        for bad in (1, 2, 4):
            with pytest.raises(ValueError):
                apply_smoothing_artifact(track, window=bad)

    def test_step_track_smoothed_moves_before_onset(self):
        script = [Phase("stand", 3.0), Phase("accelerate", 0.5, 1.4), Phase("walk", 3.0, 1.4)]
        raw = generate_scenario(params(script)).observed
        smoothed = apply_smoothing_artifact(raw, window=3)
        # sample 6 (t = 3.0 s) has not moved yet, but its smoothing window
        # reaches the displaced sample at t = 3.5 s and drags it forward
        assert np.linalg.norm(raw.positions[6]) < 1e-12
        assert np.linalg.norm(smoothed.positions[6]) > 0.0

    def test_smoothed_track_audits_with_positive_lead(self):
        script = [Phase("stand", 3.0), Phase("accelerate", 0.5, 1.4), Phase("walk", 3.0, 1.4)]
        raw = generate_scenario(params(script)).observed
        smoothed = apply_smoothing_artifact(raw, window=3)
        entry = audit_leakage(smoothed, resample_track(smoothed, rate=10.0, mode="anti_causal_linear"))
        # compare the smoothed track's resample against the *unsmoothed* raw onsets
        unsmoothed_entry = audit_leakage(raw, resample_track(smoothed, rate=10.0, mode="anti_causal_linear"))
        assert unsmoothed_entry.lead_seconds is not None and unsmoothed_entry.lead_seconds > 0
        assert entry.resampled_onset_us <= unsmoothed_entry.raw_onset_us


class TestGenerateCorpus:
    def test_empty_corpus(self, tmp_path):
        instances, scenarios = generate_corpus(0, seed=1)
        assert instances == [] and scenarios == []
        assert instances_text(instances) == ""

    def test_deterministic_bytes(self):
        a_inst, a_scen = generate_corpus(25, seed=42)
        b_inst, b_scen = generate_corpus(25, seed=42)
        assert instances_text(a_inst) == instances_text(b_inst)
        assert scenarios_sidecar_text(a_scen) == scenarios_sidecar_text(b_scen)

    def test_different_seed_differs(self):
        a_inst, _ = generate_corpus(10, seed=1)
        b_inst, _ = generate_corpus(10, seed=2)
        assert instances_text(a_inst) != instances_text(b_inst)

    def test_transition_fraction_at_least_40_percent(self):
        _, scenarios = generate_corpus(400, seed=42)
        with_transition = sum(1 for s in scenarios if s["category"] in ("initiate", "halt"))
        assert with_transition / len(scenarios) >= 0.40

    def test_transitions_land_inside_a_future_window(self):
        template = CorpusTemplate()
        _, scenarios = generate_corpus(50, template=template, seed=7)
        hist = template.duration  # scenario length in seconds
        for s in scenarios:
            if s["category"] not in ("initiate", "halt"):
                continue
            t_change = s["phases"][0]["duration"]
            # at least one window start offset puts the change inside (start+1s, start+4s]
            starts = np.arange(0.0, hist - 4.0 + 1e-9, 0.5)
            assert any(start + 1.0 < t_change <= start + 4.0 for start in starts)

    def test_splits_assigned_per_agent(self):
        instances, _ = generate_corpus(40, seed=3)
        by_agent = {}
        for inst in instances:
            by_agent.setdefault(inst.agent_id, set()).add(inst.split)
        assert all(len(s) == 1 for s in by_agent.values())
        splits = {next(iter(s)) for s in by_agent.values()}
        assert splits == {"train", "val"}

    def test_noise_free_cv_corpus_is_exact_end_to_end(self):
        # walking scenarios with zero noise: CV prediction error through the
        # whole pipeline stays at numerical zero
        from pedbench.dataset import TaskConfig, extract_instances
        from pedbench.metrics import evaluate
        from pedbench.predictors import ConstantVelocityPredictor

        template = CorpusTemplate(noise_sigma=0.0, category_weights={"cruise": 1.0})
        instances = []
        for i in range(10):
            rng = np.random.default_rng([5, i])
            speed = float(rng.uniform(0.5, 1.8))
            track = generate_scenario(
                ScenarioParams(seed=i, script=(Phase("walk", 6.0, speed),), noise_sigma=0.0,
                               initial_heading=float(rng.uniform(-np.pi, np.pi))),
                agent_id=f"cv-{i}",
            )
            resampled = resample_track(track.observed, rate=10.0, mode="anti_causal_linear")
            instances.extend(extract_instances(resampled, TaskConfig()))
        preds = ConstantVelocityPredictor().predict(instances)
        table = evaluate(instances, preds, predictor_name="cv")
        del template
        for value in table.rows[0].values.values():
            assert value < 1e-9
