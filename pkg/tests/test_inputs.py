import pytest
from hypothesis import given
from hypothesis import strategies as st

from hterqe.dataset import QERecord
from hterqe.errors import NoCandidate
from hterqe.inputs import (
    CLS,
    SEP,
    PartnerIndex,
    Setting,
    Tokenizer,
    build_inputs,
    build_mt,
    build_mt_mt,
    build_src_mt,
    choose_inference_partner,
    nearest_partner,
    sample_partner,
    truncate_pair,
    write_audit_tsv,
)


def rec(i, mt="", src="", hter=None):
    return QERecord.from_raw(i, src, mt, None, hter)


class TestBuilders:
    def test_src_mt(self):
        seq = build_src_mt(rec(0, "x", "y"))
        assert seq.tokens == (CLS, "x", SEP, "y", SEP)
        assert seq.segment_ids == (0, 0, 0, 1, 1)
        assert seq.origin is Setting.SRC_MT

    def test_src_mt_empty_translation(self):
        assert build_src_mt(rec(0, "", "s")).tokens == (CLS, SEP, "s", SEP)

    def test_src_mt_truncation(self):
        long = " ".join(["w"] * 600)
        seq = build_src_mt(rec(0, long, long), max_len=512)
        assert len(seq) == 512
        first = seq.tokens.index(SEP)
        assert first > 1 and len(seq) - first - 2 > 0

    def test_mt(self):
        seq = build_mt(rec(0, "a b"))
        assert seq.tokens == (CLS, "a", "b", SEP) and set(seq.segment_ids) == {0}

    def test_mt_empty(self):
        assert build_mt(rec(0)).tokens == (CLS, SEP)

    def test_mt_truncation(self):
        seq = build_mt(rec(0, " ".join(["w"] * 1000)))
        assert len(seq) == 512 and seq.tokens[-1] == SEP

    def test_mt_mt(self):
        seq = build_mt_mt(rec(0, "a"), rec(1, "b c"))
        assert seq.tokens == (CLS, "a", SEP, "b", "c", SEP)
        assert seq.segment_ids == (0, 0, 0, 1, 1, 1)
        assert seq.partner_id == 1

    def test_mt_mt_truncation(self):
        a = rec(0, " ".join(["a"] * 400))
        b = rec(1, " ".join(["b"] * 400))
        seq = build_mt_mt(a, b)
        assert len(seq) == 512
        # 509 slots: trimming alternates down to 255/255, then the second side gives one more
        assert seq.tokens.count("a") == 255 and seq.tokens.count("b") == 254

    def test_max_len_floor(self):
        with pytest.raises(ValueError):
            build_src_mt(rec(0, "a", "b"), max_len=4)


class TestTruncation:
    def test_longer_side_first(self):
        assert truncate_pair(list("abcdef"), list("xy"), 5) == (list("abc"), list("xy"))

    def test_equal_lengths_second_first(self):
        assert truncate_pair(list("abc"), list("xyz"), 5) == (list("abc"), list("xy"))

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(2, 60))
    def test_properties(self, la, lb, budget):
        a, b = truncate_pair(["a"] * la, ["b"] * lb, budget)
        assert len(a) + len(b) <= budget
        assert len(a) + len(b) == min(la + lb, budget)
        # a non-empty side is never emptied
        assert (la == 0 or a) and (lb == 0 or b)


class TestTokenizer:
    vocab = ["un", "##aff", "##able", "run", "##ning", "[UNK]"]

    def test_wordpiece(self):
        tok = Tokenizer("wordpiece", self.vocab)
        assert tok.tokenize(["unaffable", "running", "xyz"]) == ["un", "##aff", "##able", "run", "##ning", "[UNK]"]

    def test_whitespace_passthrough(self):
        assert Tokenizer().tokenize(["a", "b"]) == ["a", "b"]

    def test_description_round_trip(self):
        tok = Tokenizer("wordpiece", self.vocab)
        back = Tokenizer.from_description(tok.describe())
        assert back.tokenize(["running"]) == ["run", "##ning"]

    def test_vocab_file(self, tmp_path):
        (tmp_path / "v.txt").write_text("\n".join(self.vocab) + "\n")
        assert Tokenizer.from_vocab_file(tmp_path / "v.txt").tokenize(["unaff"]) == ["un", "##aff"]

    def test_wordpiece_needs_vocab(self):
        with pytest.raises(ValueError):
            Tokenizer("wordpiece")

    def test_builder_uses_tokenizer(self):
        tok = Tokenizer("wordpiece", self.vocab)
        assert build_mt(rec(0, "running"), tok).tokens == (CLS, "run", "##ning", SEP)


class TestPartners:
    def test_single_candidate(self):
        me = rec(0, "a", hter=0.50)
        pool = [me, rec(1, "b", hter=0.55), rec(2, "c", hter=0.90)]
        assert sample_partner(me, pool, 0.1, 7).id == 1

    def test_boundary_inclusive_despite_float_error(self):
        me = rec(0, "a", hter=0.3)
        assert sample_partner(me, [me, rec(1, "b", hter=0.4)], 0.1, 0).id == 1

    def test_no_candidate(self):
        me = rec(0, "a", hter=0.0)
        with pytest.raises(NoCandidate):
            sample_partner(me, [me, rec(1, "b", hter=0.5), rec(2, "c", hter=0.8)], 0.1, 0)

    def test_threshold_one_admits_all(self):
        me = rec(0, "a", hter=0.0)
        pool = [me] + [rec(i, str(i), hter=i / 10) for i in range(1, 11)]
        seen = {sample_partner(me, pool, 1.0, s).id for s in range(200)}
        assert seen == set(range(1, 11))

    def test_never_self(self):
        pool = [rec(i, str(i), hter=0.5) for i in range(5)]
        for s in range(50):
            assert sample_partner(pool[2], pool, 0.1, s).id != 2

    def test_reproducible(self):
        pool = [rec(i, str(i), hter=(i % 7) / 20) for i in range(30)]
        assert [sample_partner(pool[3], pool, 0.1, 11).id for _ in range(3)] == [
            sample_partner(pool[3], pool, 0.1, 11).id] * 3

    def test_index_matches_linear_filter(self):
        pool = [rec(i, str(i), hter=((i * 37) % 101) / 100) for i in range(101)]
        index = PartnerIndex(pool)
        for r in pool[::7]:
            expected = [p for p in pool if p.id != r.id and abs(p.hter - r.hter) <= 0.1 + 1e-9]
            assert index.candidates(r, 0.1) == expected

    def test_nearest_fallback(self):
        me = rec(0, "a", hter=0.0)
        pool = [me, rec(1, "b", hter=0.8), rec(2, "c", hter=0.5), rec(3, "d", hter=0.5)]
        assert nearest_partner(me, pool).id == 2

    def test_training_partners_fall_back(self):
        recs = [rec(0, "a", hter=0.0), rec(1, "b", hter=0.9)]
        seqs = build_inputs(recs, Setting.MT_MT, seed=1, epoch=0)
        assert [s.partner_id for s in seqs] == [1, 0]

    def test_training_partners_vary_by_epoch_only_through_seed(self):
        recs = [rec(i, f"w{i}", hter=0.5) for i in range(20)]
        e0 = [s.partner_id for s in build_inputs(recs, Setting.MT_MT, seed=4, epoch=0)]
        e0b = [s.partner_id for s in build_inputs(recs, Setting.MT_MT, seed=4, epoch=0)]
        e1 = [s.partner_id for s in build_inputs(recs, Setting.MT_MT, seed=4, epoch=1)]
        assert e0 == e0b and e0 != e1

    def test_inference_partner_ignores_order(self):
        pool = [rec(i, f"w{i}", hter=0.1 * (i % 10)) for i in range(30)]
        target = rec(100, "new")
        assert choose_inference_partner(target, pool, 3).id == choose_inference_partner(target, pool, 3).id
        batch = [rec(100, "new"), rec(101, "other")]
        a = build_inputs(batch, Setting.MT_MT, pool=pool, seed=3)
        b = build_inputs(batch[::-1], Setting.MT_MT, pool=pool, seed=3)
        assert {s.record_id: s.partner_id for s in a} == {s.record_id: s.partner_id for s in b}


def test_audit_tsv(tmp_path):
    seqs = build_inputs([rec(0, "a b", "x")], Setting.SRC_MT)
    write_audit_tsv(seqs, tmp_path / "a.tsv")
    lines = (tmp_path / "a.tsv").read_text().splitlines()
    assert lines[0] == "record_id\torigin\tpartner_id\ttokens\tsegment_ids"
    assert lines[1] == "0\tSRC_MT\t\t[CLS] a b [SEP] x [SEP]\t0 0 0 0 1 1"


def test_setting_aliases():
    assert Setting.parse("mt-mt") is Setting.MT_MT
    assert Setting.parse("SRCMT") is Setting.SRC_MT
    with pytest.raises(ValueError):
        Setting.parse("bogus")
