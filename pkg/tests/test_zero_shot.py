import json

import pytest

from hterqe.dataset import Corpus, LanguagePair, QERecord
from hterqe.errors import ClientFailure, NoRelevantPairs, TargetLangMismatch
from hterqe.ter import compute_hter, normalize
from hterqe.zero_shot import (
    CachingClient,
    HTTPTranslationClient,
    MockTranslationClient,
    TranslationCache,
    TranslationError,
    generate_pseudo_references,
    merge_for_zero_shot,
    select_relevant_pairs,
    split_train_dev,
    tag_origin,
    write_provenance_tsv,
)


def corpus(pair, rows):
    lp = LanguagePair.parse(pair)
    return Corpus(lp, "train", [QERecord.from_raw(i, s, t, None, h) for i, (s, t, h) in enumerate(rows)])


def empty(pair):
    return Corpus(LanguagePair.parse(pair), "train", [])


class DictClient:
    def __init__(self, table):
        self.table = table
        self.calls = 0

    def translate(self, text, source_lang, target_lang):
        self.calls += 1
        return self.table[text]


class TestSelect:
    def test_english_targets(self):
        pool = [empty("ro-en"), empty("si-en"), empty("et-en"), empty("en-de")]
        got = select_relevant_pairs(pool, LanguagePair.parse("km-en"))
        assert [str(c.pair) for c in got] == ["ro-en", "si-en", "et-en"]

    def test_no_target_match(self):
        with pytest.raises(NoRelevantPairs):
            select_relevant_pairs([empty("ro-en")], LanguagePair.parse("en-de"))

    def test_self_excluded(self):
        with pytest.raises(NoRelevantPairs):
            select_relevant_pairs([empty("ne-en")], LanguagePair.parse("ne-en"))


class TestGenerate:
    rows = [("s one", "the cat sat", 0.1), ("s two", "a dog ran fast", 0.2), ("s three", "hello there", 0.3)]

    def test_identity_translations(self):
        c = corpus("ro-en", self.rows)
        out = generate_pseudo_references(c, DictClient({s: t for s, t, _ in self.rows}))
        assert [p.hter_vs_pseudo for p in out] == [0.0, 0.0, 0.0]

    def test_unrelated_translation(self):
        c = corpus("ro-en", self.rows)
        out = generate_pseudo_references(c, DictClient({s: "zzz" for s, _, _ in self.rows}))
        assert [p.hter_vs_pseudo for p in out] == [1.0, 1.0, 1.0]

    def test_hand_written(self):
        c = corpus("ro-en", self.rows)
        table = {"s one": "the cat sat down", "s two": "a dog ran", "s three": "there hello"}
        out = generate_pseudo_references(c, DictClient(table))
        want = [compute_hter(normalize(t), normalize(table[s])) for s, t, _ in self.rows]
        assert [p.hter_vs_pseudo for p in out] == want == [0.25, 1 / 3, 0.5]
        assert all(p.base.origin_pair == c.pair for p in out)

    def test_abort_on_failure(self):
        c = corpus("ro-en", self.rows)
        with pytest.raises(ClientFailure) as info:
            generate_pseudo_references(c, DictClient({"s one": "x"}))
        assert info.value.record_id == 1

    def test_skip_on_failure(self):
        c = corpus("ro-en", self.rows)
        out = generate_pseudo_references(c, DictClient({"s one": "x"}), on_error="skip")
        assert [p.base.id for p in out] == [0]

    def test_cache_round_trip(self, tmp_path):
        c = corpus("ro-en", self.rows)
        backend = DictClient({s: t + " indeed" for s, t, _ in self.rows})
        first = generate_pseudo_references(c, CachingClient(backend, TranslationCache(tmp_path / "c.tsv")))
        again_client = CachingClient(backend, TranslationCache(tmp_path / "c.tsv"))
        second = generate_pseudo_references(c, again_client)
        assert first == second
        assert again_client.live_calls == 0 and backend.calls == 3

    def test_resume_after_abort(self, tmp_path):
        c = corpus("ro-en", self.rows)
        cache = TranslationCache(tmp_path / "c.tsv")
        with pytest.raises(ClientFailure):
            generate_pseudo_references(c, CachingClient(DictClient({"s one": "x"}), cache))
        full = DictClient({s: "x" for s, _, _ in self.rows})
        generate_pseudo_references(c, CachingClient(full, TranslationCache(tmp_path / "c.tsv")))
        assert full.calls == 2


class TestMock:
    def test_serves_cache_file(self, tmp_path):
        (tmp_path / "m.tsv").write_text("ro\ten\tbuna\thello\n")
        mock = MockTranslationClient(tmp_path / "m.tsv")
        assert mock.translate("buna", "ro", "en") == "hello"
        with pytest.raises(TranslationError):
            mock.translate("buna", "ro", "de")

    def test_bad_cache_line(self, tmp_path):
        (tmp_path / "m.tsv").write_text("ro\ten\tonly three\n")
        with pytest.raises(ValueError):
            TranslationCache(tmp_path / "m.tsv")

    def test_cache_rejects_tabs(self):
        with pytest.raises(ValueError):
            TranslationCache().put("ro", "en", "a\tb", "c")


class TestHTTP:
    def test_request_shape_and_rate_limit(self):
        sent, sleeps = [], []
        now = [0.0]

        def transport(url, body, timeout):
            sent.append((url, json.loads(body)))
            return json.dumps({"translatedText": "hi"}).encode()

        client = HTTPTranslationClient("http://mt.local/translate", rate_limit=2.0, transport=transport,
                                       sleep=lambda s: (sleeps.append(s), now.__setitem__(0, now[0] + s)),
                                       clock=lambda: now[0])
        assert client.translate("salut", "ro", "en") == "hi"
        assert client.translate("salut", "ro", "en") == "hi"
        assert sent[0] == ("http://mt.local/translate", {"q": "salut", "source": "ro", "target": "en",
                                                          "format": "text"})
        assert sleeps == [0.5]

    def test_backoff_then_failure(self):
        sleeps = []

        def transport(url, body, timeout):
            raise OSError("down")

        client = HTTPTranslationClient("http://x", rate_limit=1000, max_retries=3, backoff=1.0,
                                       transport=transport, sleep=sleeps.append, clock=lambda: 0.0)
        with pytest.raises(TranslationError):
            client.translate("a", "ro", "en")
        assert [s for s in sleeps if s >= 1.0] == [1.0, 2.0, 4.0]
        assert client.calls == 4

    def test_recovers(self):
        replies = iter([OSError("x"), b'{"translatedText": "ok"}'])

        def transport(url, body, timeout):
            r = next(replies)
            if isinstance(r, Exception):
                raise r
            return r

        client = HTTPTranslationClient("http://x", transport=transport, sleep=lambda s: None, clock=lambda: 0.0)
        assert client.translate("a", "ro", "en") == "ok"


class TestMerge:
    def test_counts_and_ids(self):
        a = tag_origin(corpus("ro-en", [(f"r{i}", f"t r{i}", 0.1) for i in range(5)]))
        b = tag_origin(corpus("si-en", [(f"s{i}", f"t s{i}", 0.2) for i in range(5)]))
        pseudo = generate_pseudo_references(Corpus(a.pair, "train", a.records[:3]),
                                            DictClient({f"r{i}": f"t r{i} x" for i in range(3)}))
        merged = merge_for_zero_shot([a, b], pseudo)
        assert len(merged) == 13 and [r.id for r in merged] == list(range(13))
        assert str(merged.pair) == "ro+si-en"
        assert [r.provenance for r in merged].count("pseudo") == 3
        last = merged[12]
        assert last.post_edit == normalize("t r2 x") and last.hter == pseudo[2].hter_vs_pseudo

    def test_no_pseudo(self):
        a = corpus("ro-en", [("a", "b", 0.1)])
        b = corpus("et-en", [("c", "d", 0.2)])
        merged = merge_for_zero_shot([a, b], [])
        assert [r.translation_raw for r in merged] == ["b", "d"]

    def test_mixed_targets(self):
        with pytest.raises(TargetLangMismatch):
            merge_for_zero_shot([corpus("ro-en", [("a", "b", 0.1)]), corpus("en-de", [("c", "d", 0.2)])], [])

    def test_provenance_file(self, tmp_path):
        merged = merge_for_zero_shot([corpus("ro-en", [("a", "b", 0.1)])], [])
        write_provenance_tsv(merged, tmp_path / "p.tsv")
        assert (tmp_path / "p.tsv").read_text().splitlines() == ["id\tprovenance\torigin_pair", "0\twmt\tro-en"]


def test_split_train_dev():
    c = corpus("ro-en", [(f"s{i}", f"t{i}", i / 100) for i in range(50)])
    train, dev = split_train_dev(c, 0.1, seed=3)
    assert len(train) == 45 and len(dev) == 5
    assert {r.translation_raw for r in train} | {r.translation_raw for r in dev} == {f"t{i}" for i in range(50)}
    assert split_train_dev(c, 0.1, seed=3)[1] == dev
