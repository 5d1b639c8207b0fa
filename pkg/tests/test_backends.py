from __future__ import annotations

import hashlib

import pytest

from capref.backends import (
    BackendEndpoint,
    BackendError,
    BackendSession,
    CheckpointRef,
    caption_batch,
    embed_batch,
    health_check,
    reformulate_batch,
    train,
    translate_batch,
)
from capref.backends.mocks import (
    DE_TO_EN,
    EN_TO_DE,
    SHALLOW_DE,
    MockWorld,
    caption_tokens_de,
    caption_tokens_en,
    checkpoint_id,
    checkpoint_p_err,
    measure_corruption_rate,
    mock_caption,
    mock_reformulate,
    mock_train,
    mock_translate,
)
from capref.corpus import ImageRef, make_caption, make_dataset, save_canonical
from capref.seeding import unit_float


def ck(p):
    return CheckpointRef(checkpoint_id(p, "test"), None, "digest", 1)


@pytest.fixture()
def endpoints(mock_suite):
    return mock_suite.endpoints(max_batch=3)


class TestMockWorld:
    def test_lexicon_bijective(self):
        assert len(set(DE_TO_EN.values())) == len(DE_TO_EN)
        assert {EN_TO_DE[v]: v for v in EN_TO_DE} == {v: k for k, v in EN_TO_DE.items()}

    def test_checkpoint_id_round_trip(self):
        cid = checkpoint_id(0.123456, "x", 1)
        assert checkpoint_p_err(cid) == 0.123456
        with pytest.raises(ValueError):
            checkpoint_p_err("not-a-checkpoint")

    def test_clean_checkpoint_captions_canonically(self):
        w = MockWorld()
        text = mock_caption("b00001", checkpoint_id(0.0, "c"), seed=9, world=w)
        assert text == " ".join(caption_tokens_de("b00001", 0))

    def test_caption_deterministic_across_runs(self):
        w = MockWorld()
        cid = checkpoint_id(0.4, "c")
        texts1 = [mock_caption(f"i{k}", cid, 7, w) for k in range(50)]
        texts2 = [mock_caption(f"i{k}", cid, 7, w) for k in range(50)]
        digest = lambda ts: hashlib.sha256("\n".join(ts).encode()).hexdigest()
        assert digest(texts1) == digest(texts2)

    def test_lower_error_rate_corrupts_subset_of_positions(self):
        w = MockWorld()
        low = mock_caption("i1", checkpoint_id(0.2, "c"), 3, w).split()
        high = mock_caption("i1", checkpoint_id(0.6, "c"), 3, w).split()
        clean = caption_tokens_de("i1", 0)
        low_bad = {i for i, t in enumerate(low) if t != clean[i]}
        high_bad = {i for i, t in enumerate(high) if t != clean[i]}
        assert low_bad <= high_bad

    def test_translator_round_trip_identity(self):
        texts = [" ".join(caption_tokens_de(f"z{k}", 0)) for k in range(20)]
        back = mock_translate(mock_translate(texts, "de", "en"), "en", "de")
        assert back == texts

    def test_translator_passes_unknown_tokens(self):
        assert mock_translate(["qqq mann"], "de", "en") == ["qqq man"]

    def test_reformulator_identity_on_clean_caption(self):
        text = " ".join(caption_tokens_en("i5", 0))
        assert mock_reformulate("toy://i5", text, 0, MockWorld()) == text

    def test_reformulator_restores_exactly_the_corrupted_tokens(self):
        clean_de = caption_tokens_de("i9", 0)
        corrupted = list(clean_de)
        corrupted[1] = SHALLOW_DE[corrupted[1]]
        corrupted[2] = SHALLOW_DE[corrupted[2]]
        english = mock_translate([" ".join(corrupted)], "de", "en")[0]
        fixed = mock_reformulate("toy://i9", english, 0, MockWorld())
        expected = " ".join(caption_tokens_en("i9", 0))
        assert fixed == expected
        distance = sum(a != b for a, b in zip(english.split(), fixed.split()))
        assert distance == 2

    def test_reformulator_empty_caption_generates(self):
        out = mock_reformulate("toy://i2", "", 4, MockWorld(english_err=0.0))
        assert out == " ".join(caption_tokens_en("i2", 0))

    def test_trainer_clean_data_zero_corruption(self):
        texts = [" ".join(caption_tokens_de(f"t{k}", v)) for k in range(50) for v in (0, 1)]
        result = mock_train(texts, "d1", None, 10, 0, MockWorld(noise=0.0))
        assert result.data_corruption_rate == 0.0
        assert result.p_err == pytest.approx(1000.0 / (1000.0 + 1000.0))

    def test_trainer_measures_seeded_corruption_fixture(self):
        # corrupt exactly the tokens a seeded coin picks; track the truth
        corrupted_texts = []
        corrupt = total = 0
        for k in range(400):
            tokens = list(caption_tokens_de(f"f{k}", 0))
            for i, t in enumerate(tokens):
                total += 1
                if t != "." and unit_float("fixture", str(k), i) < 0.3 * 8 / 7:
                    tokens[i] = "zz" + t
                    corrupt += 1
            corrupted_texts.append(" ".join(tokens))
        truth = corrupt / total
        assert abs(truth - 0.3) < 0.02
        assert measure_corruption_rate(corrupted_texts) == pytest.approx(truth, abs=1e-12)

    def test_trainer_continue_averages_parent_and_data(self):
        texts = [" ".join(caption_tokens_de(f"t{k}", 0)) for k in range(50)]
        parent = checkpoint_id(0.4, "p")
        result = mock_train(texts, "d2", parent, 1, 0, MockWorld(noise=0.0))
        assert result.p_err == pytest.approx(0.2)

    def test_trainer_rejects_zero_epochs(self):
        with pytest.raises(ValueError):
            mock_train(["mann ."], "d", None, 0, 0, MockWorld())

    def test_monotonicity_lower_corruption_lower_p_err(self):
        w = MockWorld(noise=0.0)
        clean = [" ".join(caption_tokens_de(f"m{k}", 0)) for k in range(100)]
        dirty = [t.replace("ein", "nei", 1) for t in clean]
        parent = checkpoint_id(0.3, "p")
        assert mock_train(clean, "d", parent, 1, 0, w).p_err <= mock_train(dirty, "d", parent, 1, 0, w).p_err


class TestClient:
    def test_empty_caption_batch_makes_no_requests(self, mock_suite, endpoints):
        served = mock_suite.servers["captioner"].requests_served
        assert caption_batch(endpoints["captioner"], ck(0.1), [], 0, "de") == []
        assert mock_suite.servers["captioner"].requests_served == served

    def test_chunking_seven_images_batch_three(self, mock_suite, endpoints):
        mock_suite.servers["captioner"].request_sizes.clear()
        images = [ImageRef(f"c{k}", f"toy://c{k}", "toy") for k in range(7)]
        records = caption_batch(endpoints["captioner"], ck(0.0), images, 0, "de")
        assert len(records) == 7
        assert mock_suite.servers["captioner"].request_sizes[-3:] == [3, 3, 1]
        assert [r.image_id for r in records] == [img.id for img in images]

    def test_captions_byte_identical_across_runs(self, endpoints):
        images = [ImageRef(f"d{k}", f"toy://d{k}", "toy") for k in range(10)]
        a = caption_batch(endpoints["captioner"], ck(0.5), images, 3, "de")
        b = caption_batch(endpoints["captioner"], ck(0.5), images, 3, "de")
        assert [r.text for r in a] == [r.text for r in b]

    def test_translate_round_trip_through_wire(self, endpoints):
        texts = ["ein mann steht auf der brücke .", "qqq hund"]
        en = translate_batch(endpoints["translator"], "de", "en", texts)
        de = translate_batch(endpoints["translator"], "en", "de", en)
        assert de == texts

    def test_translate_same_language_rejected(self, endpoints):
        with pytest.raises(ValueError):
            translate_batch(endpoints["translator"], "de", "de", ["x"])

    def test_reformulate_empty_caption_generates(self, endpoints):
        out = reformulate_batch(endpoints["reformulator"], [("toy://e1", "")])
        assert out[0].strip()

    def test_embed_same_token_same_vector(self, endpoints):
        vecs = embed_batch(endpoints["embedder"], [["mann", "hund"], ["mann"]])
        assert vecs[0][0] == vecs[1][0]
        assert vecs[0][0] != vecs[0][1]

    def test_embed_empty_list(self, endpoints):
        assert embed_batch(endpoints["embedder"], []) == []
        assert embed_batch(endpoints["embedder"], [[]]) == [[]]

    def test_distinct_tokens_distinct_vectors_on_vocabulary(self, endpoints):
        vocab = sorted(DE_TO_EN)
        vecs = embed_batch(endpoints["embedder"], [vocab])[0]
        seen = {tuple(v) for v in vecs}
        assert len(seen) == len(vocab)

    def test_retry_succeeds_after_transient_failures(self, mock_suite, endpoints):
        mock_suite.servers["translator"].fail_next(2)
        session = BackendSession(backoff_base=0.001)
        out = translate_batch(endpoints["translator"], "de", "en", ["mann"], session=session)
        assert out == ["man"]

    def test_retries_exhausted_reports_failed_ids(self, mock_suite, endpoints):
        mock_suite.servers["captioner"].fail_next(10)
        session = BackendSession(backoff_base=0.001)
        images = [ImageRef(f"r{k}", f"toy://r{k}", "toy") for k in range(2)]
        with pytest.raises(BackendError) as exc:
            caption_batch(endpoints["captioner"], ck(0.1), images, 0, "de", session=session)
        assert exc.value.failed_ids == ("r0", "r1")
        mock_suite.servers["captioner"].fail_next(0)

    def test_non_transient_error_not_retried(self, mock_suite, endpoints):
        computed = mock_suite.servers["translator"].requests_computed
        session = BackendSession(backoff_base=0.001)
        with pytest.raises(BackendError):
            translate_batch(endpoints["translator"], "de", "fr", ["x"], session=session)
        assert mock_suite.servers["translator"].requests_computed == computed + 1

    def test_train_checkpoint_lineage(self, endpoints, tmp_path):
        images = [ImageRef(f"t{k}", f"toy://t{k}", "toy") for k in range(30)]
        captions = [make_caption(img.id, " ".join(caption_tokens_de(img.id, 0)), "de") for img in images]
        manifest = save_canonical(make_dataset("toy", "train", images, captions), tmp_path / "r.jsonl")
        first = train(endpoints["trainer"], manifest, None, epochs=10, seed=0)
        second = train(endpoints["trainer"], manifest, first, epochs=1, seed=0)
        assert first.parent is None
        assert second.parent == first.id
        assert second.trained_on == manifest.content_digest
        assert checkpoint_p_err(second.id) <= checkpoint_p_err(first.id)

    def test_train_rejects_zero_epochs(self, endpoints, tmp_path):
        images = [ImageRef("z", "toy://z", "toy")]
        captions = [make_caption("z", "mann .", "de")]
        manifest = save_canonical(make_dataset("t", "train", images, captions), tmp_path / "z.jsonl")
        with pytest.raises(ValueError):
            train(endpoints["trainer"], manifest, None, epochs=0, seed=0)

    def test_healthz(self, endpoints):
        for ep in endpoints.values():
            assert health_check(ep)
        dead = BackendEndpoint(kind="captioner", base_url="http://127.0.0.1:1", identity="dead@0", timeout_ms=200)
        assert not health_check(dead)

    def test_idempotent_request_ids_not_recomputed(self, mock_suite, endpoints):
        # a retried chunk reuses the server's remembered answer
        server = mock_suite.servers["translator"]
        server.fail_next(0)
        before = server.requests_computed
        session = BackendSession(backoff_base=0.001)
        translate_batch(endpoints["translator"], "de", "en", ["hund"], session=session)
        assert server.requests_computed == before + 1


class TestProtocolConformance:
    """Wire-schema round trips and chunked-vs-single equivalence."""

    def test_caption_schema_round_trip(self, mock_suite):
        import requests

        server = mock_suite.servers["captioner"]
        payload = {"checkpoint": checkpoint_id(0.0, "s"), "seed": 1,
                   "images": [{"id": "p1", "uri": "toy://p1"}]}
        doc = requests.post(server.url + "/v1/caption", json=payload, timeout=5).json()
        assert set(doc) == {"captions"}
        assert set(doc["captions"][0]) == {"image_id", "text"}

    def test_translate_schema_round_trip(self, mock_suite):
        import requests

        doc = requests.post(
            mock_suite.servers["translator"].url + "/v1/translate",
            json={"src": "de", "tgt": "en", "texts": ["mann"]},
            timeout=5,
        ).json()
        assert doc == {"texts": ["man"]}

    def test_reformulate_schema_round_trip(self, mock_suite):
        import requests

        doc = requests.post(
            mock_suite.servers["reformulator"].url + "/v1/reformulate",
            json={"items": [{"image_uri": "toy://p2", "caption": "a man stands ."}]},
            timeout=5,
        ).json()
        assert set(doc) == {"captions"}
        assert doc["captions"] == ["a man stands ."]

    def test_embed_schema_round_trip(self, mock_suite):
        import requests

        doc = requests.post(
            mock_suite.servers["embedder"].url + "/v1/embed",
            json={"tokens": [["mann"]]},
            timeout=5,
        ).json()
        assert set(doc) == {"vectors", "dim"}
        assert len(doc["vectors"][0][0]) == doc["dim"]

    def test_train_schema_round_trip(self, mock_suite, tmp_path):
        import requests

        images = [ImageRef("w", "toy://w", "toy")]
        captions = [make_caption("w", "mann .", "de")]
        save_canonical(make_dataset("t", "train", images, captions), tmp_path / "w.jsonl")
        url = mock_suite.servers["trainer"].url
        doc = requests.post(
            url + "/v1/train",
            json={"manifest_uri": str(tmp_path / "w.jsonl.manifest.json"), "init": None,
                  "epochs": 1, "seed": 0},
            timeout=5,
        ).json()
        assert set(doc) == {"job_id"}
        status = requests.get(url + f"/v1/train/{doc['job_id']}", timeout=5).json()
        assert status["status"] == "done"
        assert status["checkpoint"]

    @pytest.mark.parametrize("size", list(range(1, 7)))
    def test_chunked_equals_single_request(self, mock_suite, size):
        chunked = mock_suite.endpoints(max_batch=3)
        single = mock_suite.endpoints(max_batch=1000)
        images = [ImageRef(f"q{k}", f"toy://q{k}", "toy") for k in range(size)]
        a = caption_batch(chunked["captioner"], ck(0.3), images, 5, "de")
        b = caption_batch(single["captioner"], ck(0.3), images, 5, "de")
        assert [r.text for r in a] == [r.text for r in b]

        texts = [" ".join(caption_tokens_de(f"q{k}", 0)) for k in range(size)]
        assert translate_batch(chunked["translator"], "de", "en", texts) == translate_batch(
            single["translator"], "de", "en", texts
        )
        items = [(f"toy://q{k}", texts[k]) for k in range(size)]
        assert reformulate_batch(chunked["reformulator"], items) == reformulate_batch(
            single["reformulator"], items
        )
        lists = [t.split() for t in texts]
        assert embed_batch(chunked["embedder"], lists) == embed_batch(single["embedder"], lists)
