from __future__ import annotations

import dataclasses
import json

import pytest

from capref.corpus import load_canonical
from capref.pipeline import (
    ArtifactStore,
    PlanError,
    VariantSpec,
    plan_variant,
    run,
    sweep,
)
from capref.pipeline.config import EndpointConfig, parse_variant
from capref.pipeline.report import (
    ReportError,
    machine_report_text,
    machine_rows,
    render_comparison,
    render_scores_html,
    render_scores_table,
    summarize_cells,
)
from capref.pipeline.run import materialize_subset

RE_STAGES = [
    "train_base",
    "generate",
    "translate_to_en",
    "reformulate",
    "translate_back",
    "assemble",
    "continue_train",
    "evaluate",
]


class TestPlanning:
    def test_re_has_the_eight_stage_sequence(self, small_config):
        plan = plan_variant(VariantSpec("re", seed=0), small_config)
        assert [s.kind for s in plan.stages] == RE_STAGES

    def test_base_has_no_generate_or_translate(self, small_config):
        plan = plan_variant(VariantSpec("base", seed=0), small_config)
        assert [s.kind for s in plan.stages] == ["train_base", "evaluate"]

    def test_own_is_re_minus_translation_stages(self, small_config):
        own = plan_variant(VariantSpec("own", seed=0), small_config)
        re_ = plan_variant(VariantSpec("re", seed=0), small_config)
        assert [s.kind for s in own.stages] == [
            k for k in RE_STAGES if k not in ("translate_to_en", "reformulate", "translate_back")
        ]
        # the shared generation stage has the same cache key in both plans
        assert own.stage("generate").cache_key == re_.stage("generate").cache_key

    def test_plan_is_pure(self, small_config):
        a = plan_variant(VariantSpec("re", seed=3), small_config)
        b = plan_variant(VariantSpec("re", seed=3), small_config)
        assert a.digest == b.digest

    def test_cache_keys_respond_only_to_their_inputs(self, small_config):
        base = plan_variant(VariantSpec("re", seed=0), small_config)
        reseeded = plan_variant(VariantSpec("re", seed=1), small_config)
        assert {s.cache_key for s in base.stages}.isdisjoint(s.cache_key for s in reseeded.stages)

        other_epochs = dataclasses.replace(base)  # same object; use config copy instead
        import copy

        cfg2 = copy.deepcopy(small_config)
        cfg2.base_epochs += 1
        changed = plan_variant(VariantSpec("re", seed=0), cfg2)
        assert changed.stage("train_base").cache_key != base.stage("train_base").cache_key

        cfg3 = copy.deepcopy(small_config)
        cfg3.backends["captioner"] = dataclasses.replace(
            cfg3.backends["captioner"], identity="mock-captioner@2"
        )
        swapped = plan_variant(VariantSpec("re", seed=0), cfg3)
        assert swapped.stage("generate").cache_key != base.stage("generate").cache_key
        assert swapped.stage("train_base").cache_key == base.stage("train_base").cache_key

    def test_plus_imagenet_changes_generate_inputs(self, small_config):
        plain = plan_variant(VariantSpec("re", seed=0), small_config)
        extended = plan_variant(VariantSpec("re", plus_imagenet=True, seed=0), small_config)
        assert extended.stage("generate").cache_key != plain.stage("generate").cache_key
        assert "extension" in dict(extended.stage("generate").inputs)

    def test_h_tran_plus_imagenet_rejected(self, small_config):
        with pytest.raises(PlanError, match="human captions"):
            plan_variant(VariantSpec("h_tran", plus_imagenet=True, seed=0), small_config)

    def test_h_tran_without_human_english_captions_rejected(self, small_config, small_world):
        import copy

        cfg = copy.deepcopy(small_config)
        cfg.additional_dataset = str(small_world.extension)  # caption-less images
        with pytest.raises(PlanError, match="human English captions"):
            plan_variant(VariantSpec("h_tran", seed=0), cfg)

    def test_missing_backend_rejected(self, small_config):
        import copy

        cfg = copy.deepcopy(small_config)
        del cfg.backends["translator"]
        with pytest.raises(Exception, match="translator"):
            plan_variant(VariantSpec("re", seed=0), cfg)

    def test_variant_labels(self):
        assert parse_variant("h-tran").label == "h-tran"
        assert parse_variant("re+IN").plus_imagenet
        assert parse_variant("re+IN").label == "re+IN"


class TestRun:
    def test_run_re_eight_outcomes_and_scores(self, small_config):
        plan = plan_variant(VariantSpec("re", seed=0), small_config)
        record = run(plan, small_config)
        assert record.ok
        assert len(record.outcomes) == 8
        assert set(record.scores) == {"bleu4", "cider_d", "bert_score"}

    def test_second_run_all_hits_and_identical_scores(self, small_config):
        plan = plan_variant(VariantSpec("own", seed=0), small_config)
        first = run(plan, small_config)
        second = run(plan, small_config)
        assert not first.all_hits
        assert second.all_hits
        assert first.scores == second.scores

    def test_tampered_stage_recomputed(self, small_config):
        plan = plan_variant(VariantSpec("base", seed=0), small_config)
        store = ArtifactStore(small_config.store_dir)
        first = run(plan, small_config, store=store)
        key = plan.stage("train_base").cache_key
        (store.root / key / "output.jsonl").write_text("tampered\n")
        second = run(plan, small_config, store=store)
        statuses = {o.name: o.status for o in second.outcomes}
        assert statuses["train_base"] == "computed"
        assert statuses["evaluate"] == "hit"
        assert first.scores == second.scores

    def test_failed_stage_halts_dependents_but_not_independent_branches(self, small_config):
        import copy

        cfg = copy.deepcopy(small_config)
        cfg.backends["trainer"] = EndpointConfig(
            url="http://127.0.0.1:9", identity="dead-trainer@0", timeout_ms=100, max_retries=0
        )
        plan = plan_variant(VariantSpec("m_tran", seed=0), cfg)
        record = run(plan, cfg, check_health=False)
        statuses = {o.name: o.status for o in record.outcomes}
        assert statuses["train_base"] == "failed"
        # english-caption generation does not depend on the base checkpoint
        assert statuses["generate"] == "computed"
        assert statuses["translate_back"] == "computed"
        assert statuses["assemble"] == "computed"
        assert statuses["continue_train"] == "skipped"
        assert statuses["evaluate"] == "skipped"

    def test_partial_state_resumable(self, small_config):
        import copy

        store = ArtifactStore(small_config.store_dir)
        cfg = copy.deepcopy(small_config)
        cfg.backends["trainer"] = EndpointConfig(
            url="http://127.0.0.1:9", identity=small_config.backends["trainer"].identity,
            timeout_ms=100, max_retries=0,
        )
        broken = run(plan_variant(VariantSpec("m_tran", seed=0), cfg), cfg, store=store, check_health=False)
        assert not broken.ok
        fixed = run(plan_variant(VariantSpec("m_tran", seed=0), small_config), small_config, store=store)
        statuses = {o.name: o.status for o in fixed.outcomes}
        assert fixed.ok
        assert statuses["generate"] == "hit"
        assert statuses["assemble"] == "hit"
        assert statuses["train_base"] == "computed"

    def test_unhealthy_backend_detected(self, small_config):
        import copy

        from capref.pipeline.run import RunError

        cfg = copy.deepcopy(small_config)
        cfg.backends["trainer"] = EndpointConfig(
            url="http://127.0.0.1:9", identity="dead@0", timeout_ms=100, max_retries=0
        )
        with pytest.raises(RunError, match="not healthy"):
            run(plan_variant(VariantSpec("base", seed=0), cfg), cfg)

    def test_checkpoint_lineage_across_stages(self, small_config):
        plan = plan_variant(VariantSpec("own", seed=0), small_config)
        store = ArtifactStore(small_config.store_dir)
        run(plan, small_config, store=store)
        base_ck = json.loads(store.lookup(plan.stage("train_base").cache_key).output_text())
        cont_ck = json.loads(store.lookup(plan.stage("continue_train").cache_key).output_text())
        assert cont_ck["parent"] == base_ck["id"]


class TestSubsets:
    def test_materialized_subset_is_nested_and_deterministic(self, small_config):
        store = ArtifactStore(small_config.store_dir)
        p2 = materialize_subset(small_config, 20, 7, store)
        p5 = materialize_subset(small_config, 50, 7, store)
        d2, d5 = load_canonical(p2), load_canonical(p5)
        assert {i.id for i in d2.images} <= {i.id for i in d5.images}
        assert materialize_subset(small_config, 20, 7, store) == p2


@pytest.fixture(scope="module")
def sweep_result(small_world, mock_suite, tmp_path_factory):
    from capref.pipeline.config import ExperimentConfig

    backends = {
        kind: EndpointConfig(url=s.url, identity=s.identity, max_batch=256)
        for kind, s in mock_suite.servers.items()
    }
    config = ExperimentConfig(
        name="mini-sweep",
        target_language="de",
        base_dataset=str(small_world.base),
        additional_dataset=str(small_world.additional),
        test_dataset=str(small_world.test),
        extension_dataset=str(small_world.extension),
        backends=backends,
        seeds=[0, 1],
        subset_sizes=[20, 60],
        store_dir=str(tmp_path_factory.mktemp("sweepstore")),
    )
    return config, sweep(config)


class TestSweepAndReport:
    def test_grid_shape_and_finiteness(self, sweep_result):
        config, result = sweep_result
        assert len(result.records) == 2 * 2 * 5
        for _, _, _, record in result.records:
            assert all(s == s and s is not None for s in record.scores.values())

    def test_re_beats_own_everywhere(self, sweep_result):
        _, result = sweep_result
        for n in (20, 60):
            for seed in (0, 1):
                for metric in ("bleu4", "cider_d"):
                    assert result.score("re", n, seed, metric) > result.score("own", n, seed, metric)

    def test_second_sweep_is_all_hits_with_identical_report(self, sweep_result):
        config, result = sweep_result
        again = sweep(config)
        assert again.all_hits
        assert machine_report_text(result) == machine_report_text(again)

    def test_subset_size_exceeding_base_rejected(self, sweep_result):
        import copy

        from capref.pipeline.run import RunError

        config, _ = sweep_result
        cfg = copy.deepcopy(config)
        cfg.subset_sizes = [10_000]
        with pytest.raises(RunError, match="exceeds"):
            sweep(cfg)

    def test_machine_rows_schema(self, sweep_result):
        _, result = sweep_result
        rows = machine_rows(result)
        assert all(set(r) == {"variant", "n", "seed", "metric", "score"} for r in rows)


class TestReportRendering:
    def test_scores_table_matches_golden(self, fixtures_dir):
        rows = [json.loads(l) for l in (fixtures_dir / "report_rows.jsonl").read_text().splitlines()]
        golden = (fixtures_dir / "goldens" / "scores_table.txt").read_text()
        assert render_scores_table(rows) == golden

    def test_scores_html_matches_golden(self, fixtures_dir):
        rows = [json.loads(l) for l in (fixtures_dir / "report_rows.jsonl").read_text().splitlines()]
        golden = (fixtures_dir / "goldens" / "scores_table.html").read_text()
        assert render_scores_html(rows) == golden

    def test_comparison_matches_golden(self, fixtures_dir):
        baselines = [(n, s) for n, s in json.loads((fixtures_dir / "comparison_baselines.json").read_text())]
        golden = (fixtures_dir / "goldens" / "comparison.txt").read_text()
        assert render_comparison(baselines, ("re+IN", 21.4)) == golden

    def test_single_seed_renders_zero_std(self):
        rows = [{"variant": "base", "n": 10, "seed": 0, "metric": "bleu4", "score": 5.0}]
        assert "5.0 ± 0.0" in render_scores_table(rows)

    def test_three_seeds_one_row(self):
        rows = [
            {"variant": "base", "n": 10, "seed": s, "metric": m, "score": v + s * 0.1}
            for s in range(3)
            for m, v in [("bleu4", 2.8), ("cider_d", 11.0), ("bert_score", 70.0)]
        ]
        table = render_scores_table(rows)
        assert table.count("\n") == 3  # header, rule, one variant row
        assert "±" in table

    def test_inconsistent_metric_sets_rejected(self):
        rows = [
            {"variant": "base", "n": 10, "seed": 0, "metric": "bleu4", "score": 1.0},
            {"variant": "re", "n": 10, "seed": 0, "metric": "cider_d", "score": 1.0},
        ]
        with pytest.raises(ReportError, match="inconsistent"):
            render_scores_table(rows)

    def test_summaries_recomputable_from_per_seed(self, fixtures_dir):
        rows = [json.loads(l) for l in (fixtures_dir / "report_rows.jsonl").read_text().splitlines()]
        for summary in summarize_cells(rows).values():
            from statistics import fmean, pstdev

            assert summary.mean == pytest.approx(fmean(summary.per_seed))
            assert summary.std == pytest.approx(pstdev(summary.per_seed))
