"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a "ACCEPTANCE Cnn ...: PASS" line on success (visible with
pytest -s); a failing criterion fails its test. Synthetic corpora are built
deterministically, so every statistical value here is reproducible bit for
bit. Runs in a few minutes on a laptop.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import pytest

from bpt.cli import main as cli_main
from bpt.corpus import load_corpus, split_corpus, write_document_text
from bpt.errors import (
    BadMagicError,
    BadVersionError,
    ChecksumMismatchError,
    TruncatedFileError,
    VocabHashMismatchError,
)
from bpt.instances import (
    InstanceConfig,
    generate_conventional,
    generate_simpt,
    pair_diversity,
)
from bpt.mesh_filter import ArticleRecord, load_ruleset, select_articles
from bpt.rng import SplitRng
from bpt.serialize import manifest_path, read_instances, write_instances
from bpt.tokenizer import WordPieceTokenizer
from bpt.vocab import (
    SPECIAL_TOKENS,
    Vocabulary,
    combined_word_counts,
    corpus_word_counts,
    normalize,
    plan_amplification,
    pretokenize,
    train_bpe,
    word_symbols,
)
from bpt.verify import FAIL, PASS, Tolerances, verify_file

from .conftest import make_document_sentences, make_lexicon
from .oracles import bpe_oracle

SHARD_BYTES = 30_000


def announce(cid: str, detail: str) -> None:
    print(f"ACCEPTANCE {cid}: PASS - {detail}", flush=True)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def acc_lexicon():
    return make_lexicon(SplitRng(101), 400)


def _doc_block(rng, lexicon):
    return "\n".join(make_document_sentences(rng, lexicon, rng.randint(60, 120)))


def _build_corpus_by_bytes(path: Path, seed: int, lexicon, target_bytes: int):
    rng = SplitRng(seed)
    blocks, total = [], 0
    while total < target_bytes:
        block = _doc_block(rng, lexicon)
        blocks.append(block)
        total += len(block.encode()) + 2
    path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def acc_vocab(workdir, acc_lexicon):
    """Subword vocabulary trained on a sample of the synthetic language."""
    sample = _build_corpus_by_bytes(workdir / "vocab_sample.txt", 909, acc_lexicon, 2_000_000)
    corpus = load_corpus(sample, "sample", "small")
    counts = Counter()
    for doc in corpus.documents:
        for sentence in doc.sentences:
            counts.update(pretokenize(normalize(sentence)))
    # converges below target once every lexicon word is merged whole
    vocab, _ = train_bpe(counts, 3000, min_frequency=1)
    assert vocab.size > 500
    vocab.save(workdir / "vocab.txt")
    return vocab


@pytest.fixture(scope="module")
def big_instance_file(workdir, acc_lexicon, acc_vocab):
    """Criteria 1+2 input: >= 1e5 conventional instances at default masking
    settings (cap 20 never binds at max_seq_length 128)."""
    corpus_path = _build_corpus_by_bytes(workdir / "big.txt", 500, acc_lexicon, 7_400_000)
    corpus = load_corpus(corpus_path, "big", "small")
    config = InstanceConfig(
        max_seq_length=128, dupe_factor=10, n_splits=8, master_seed=1234
    )
    stream, report = generate_conventional(
        corpus.documents, WordPieceTokenizer(acc_vocab), config, threads=4
    )
    path = workdir / "big_instances.bin"
    write_instances(stream, path, acc_vocab, config, statistics=lambda: report.to_dict())
    return path, report


@pytest.fixture(scope="module")
def ratio_corpora(workdir, acc_lexicon):
    """Small:large at byte ratio 1:30; the small corpus packs into exactly
    ten full shards so balanced rounds consume all of it every time."""
    small_path = workdir / "ratio_small.txt"
    rng = SplitRng(601)
    blocks = []
    while True:
        blocks.append(_doc_block(rng, acc_lexicon))
        small_path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
        shards = split_corpus(load_corpus(small_path, "sP", "small"), SHARD_BYTES)
        if len(shards) == 10 and shards[-1].byte_size >= SHARD_BYTES:
            break
    small = load_corpus(small_path, "sP", "small")
    large_path = _build_corpus_by_bytes(
        workdir / "ratio_large.txt", 602, acc_lexicon, 30 * small.total_bytes
    )
    large = load_corpus(large_path, "sW", "large")
    ratio = large.total_bytes / small.total_bytes
    assert 29.0 <= ratio <= 31.0
    return small, large


def test_c01_masking_statistics(big_instance_file, acc_vocab):
    """Over >= 1e5 instances with non-binding cap: selection rate in
    [0.147, 0.153]; replacement split 0.80/0.10/0.10 each within 0.005."""
    path, report = big_instance_file
    assert report.instances >= 100_000
    result = verify_file(path, acc_vocab, Tolerances(origin_target=None))
    checks = {c.name: c for c in result.checks}
    assert 0.147 <= result.mask_selection_rate <= 0.153
    assert checks["mask_selection_rate"].status == PASS
    mask_frac, random_frac, unchanged_frac = result.mask_split
    assert abs(mask_frac - 0.80) <= 0.005
    assert abs(random_frac - 0.10) <= 0.005
    assert abs(unchanged_frac - 0.10) <= 0.005
    for name in ("mask_replaced_fraction", "mask_random_fraction", "mask_unchanged_fraction"):
        assert checks[name].status == PASS
    announce(
        "C01 masking statistics",
        f"rate={result.mask_selection_rate:.4f} split={mask_frac:.4f}/{random_frac:.4f}/{unchanged_frac:.4f} "
        f"over {result.instances} instances",
    )


def test_c02_nsp_balance(big_instance_file, acc_vocab):
    """is_next-true fraction in [0.48, 0.52] over >= 1e4 instances."""
    path, report = big_instance_file
    assert report.instances >= 10_000
    result = verify_file(path, acc_vocab, Tolerances(origin_target=None))
    assert 0.48 <= result.nsp_positive_rate <= 0.52
    assert {c.name: c for c in result.checks}["nsp_positive_rate"].status == PASS
    announce("C02 nsp balance", f"positive rate={result.nsp_positive_rate:.4f}")


def test_c03_simpt_balance(workdir, ratio_corpora, acc_vocab):
    """At byte ratio 1:30, balanced mode yields small-origin fraction in
    [0.45, 0.55]; conventional mode lands within 0.01 of 1/31."""
    small, large = ratio_corpora
    tokenizer = WordPieceTokenizer(acc_vocab)
    small_shards = split_corpus(small, SHARD_BYTES)
    large_shards = split_corpus(large, SHARD_BYTES)

    simpt_cfg = InstanceConfig(max_seq_length=128, n_rounds=12, shards_per_corpus=10, master_seed=77)
    stream, simpt_report = generate_simpt(small_shards, large_shards, tokenizer, simpt_cfg, threads=4)
    simpt_path = workdir / "simpt.bin"
    write_instances(stream, simpt_path, acc_vocab, simpt_cfg, statistics=lambda: simpt_report.to_dict())
    assert simpt_report.instances >= 10_000
    frac = simpt_report.small_origin_fraction
    assert 0.45 <= frac <= 0.55
    # a balanced-mode file passes every default-tolerance check
    result = verify_file(simpt_path, acc_vocab, Tolerances())
    assert result.passed, [c.to_dict() for c in result.checks if c.status == FAIL]

    conv_cfg = InstanceConfig(max_seq_length=128, dupe_factor=1, n_splits=8, master_seed=78)
    conv_stream, conv_report = generate_conventional(
        small.documents + large.documents, tokenizer, conv_cfg, threads=4
    )
    conv_path = workdir / "conv_ratio.bin"
    write_instances(conv_stream, conv_path, acc_vocab, conv_cfg, statistics=lambda: conv_report.to_dict())
    assert conv_report.instances >= 10_000
    conv_frac = conv_report.small_origin_fraction
    assert abs(conv_frac - 1 / 31) <= 0.01
    announce(
        "C03 balanced up-sampling",
        f"simpt small fraction={frac:.4f}, conventional={conv_frac:.4f} (corpus ratio 1:30)",
    )


def test_c04_pair_diversity(acc_lexicon, acc_vocab):
    """At equal instance counts on the same toy corpora, balanced mode yields
    strictly more distinct negative document pairs, over 5 seeds."""
    from bpt.corpus import Document, Origin, Shard

    tokenizer = WordPieceTokenizer(acc_vocab)
    rng = SplitRng(888)
    small_docs = [
        Document(f"s#{i}", Origin.SMALL, make_document_sentences(rng, acc_lexicon, 8))
        for i in range(8)
    ]
    large_docs = [
        Document(f"l#{i}", Origin.LARGE, make_document_sentences(rng, acc_lexicon, 8))
        for i in range(8)
    ]
    small_shards = [Shard(i, Origin.SMALL, [d], 1) for i, d in enumerate(small_docs)]
    large_shards = [Shard(i, Origin.LARGE, [d], 1) for i, d in enumerate(large_docs)]

    results = []
    for seed in range(5):
        simpt_cfg = InstanceConfig(
            max_seq_length=64, n_rounds=10, shards_per_corpus=3, master_seed=seed
        )
        simpt = list(generate_simpt(small_shards, large_shards, tokenizer, simpt_cfg)[0])
        conv_base_cfg = InstanceConfig(max_seq_length=64, dupe_factor=1, n_splits=4, master_seed=seed)
        base = list(generate_conventional(small_docs + large_docs, tokenizer, conv_base_cfg)[0])
        dupe = max(1, -(-len(simpt) // len(base)))
        conv_cfg = InstanceConfig(max_seq_length=64, dupe_factor=dupe, n_splits=4, master_seed=seed)
        conv = list(generate_conventional(small_docs + large_docs, tokenizer, conv_cfg)[0])
        k = min(len(simpt), len(conv))
        simpt_pairs = pair_diversity(simpt[:k])
        conv_pairs = pair_diversity(conv[:k])
        assert simpt_pairs > conv_pairs, f"seed {seed}: {simpt_pairs} vs {conv_pairs} at {k} instances"
        results.append((simpt_pairs, conv_pairs))
    announce("C04 pair diversity", f"simpt>conventional for 5 seeds: {results}")


# criterion 5 constants, frozen after running the brute-force oracle on the
# constructed corpora (oracle and trainer both give 10/10 amplified, 0/10 plain)
AMPV_MARKERS = ["nop", "qrs", "tuv", "wxy", "zon", "prw", "sux", "vyt", "uqz", "ros"]
AMPV_MERGE_BUDGET = 30
AMPV_MIN_AMPLIFIED = 8
AMPV_MAX_PLAIN = 2


def _ampv_corpus_text(words_counts, seed=7, per_line=8):
    stream = []
    for word, count in words_counts:
        stream.extend([word] * count)
    rng = SplitRng(seed)
    rng.shuffle(stream)
    lines = [" ".join(stream[i : i + per_line]) for i in range(0, len(stream), per_line)]
    return "\n".join(lines) + "\n"


def test_c05_amplified_vocabulary_effect(workdir):
    """Marker terms occurring only in the small corpus survive as whole
    tokens once the small corpus is amplified to the large corpus's size."""
    rng = SplitRng(4242)
    fillers, seen = [], set()
    while len(fillers) < 30:
        w = "".join("abcdefghijklm"[rng.randrange(13)] for _ in range(4))
        if w not in seen:
            seen.add(w)
            fillers.append(w)
    small_path = workdir / "ampv_small.txt"
    large_path = workdir / "ampv_large.txt"
    small_path.write_text(_ampv_corpus_text([(m, 50) for m in AMPV_MARKERS]), encoding="utf-8")
    large_path.write_text(_ampv_corpus_text([(f, 600) for f in fillers]), encoding="utf-8")
    small = load_corpus(small_path, "s", "small")
    large = load_corpus(large_path, "l", "large")
    plan = plan_amplification(small, large)
    assert plan.repeat_factor >= 13  # enough to lift 50-count markers over 600-count fillers

    small_counts = corpus_word_counts(small)
    large_counts = corpus_word_counts(large)
    alphabet = {
        s for w in list(small_counts) + list(large_counts) for s in word_symbols(w)
    }
    target = len(SPECIAL_TOKENS) + len(alphabet) + AMPV_MERGE_BUDGET

    plain_vocab, _ = train_bpe(combined_word_counts(small_counts, large_counts, 1), target)
    amp_vocab, _ = train_bpe(
        combined_word_counts(small_counts, large_counts, plan.repeat_factor), target
    )
    plain_whole = sum(m in plain_vocab for m in AMPV_MARKERS)
    amp_whole = sum(m in amp_vocab for m in AMPV_MARKERS)
    assert amp_whole >= AMPV_MIN_AMPLIFIED
    assert plain_whole <= AMPV_MAX_PLAIN
    # regression cross-check against the independent oracle on both streams
    for counts, vocab in (
        (combined_word_counts(small_counts, large_counts, 1), plain_vocab),
        (combined_word_counts(small_counts, large_counts, plan.repeat_factor), amp_vocab),
    ):
        oracle_tokens, oracle_merges = bpe_oracle(dict(counts), target, SPECIAL_TOKENS, 2)
        assert vocab.tokens == oracle_tokens
        assert vocab.merges == oracle_merges
    announce(
        "C05 amplified vocabulary",
        f"whole markers: amplified={amp_whole}/10, plain={plain_whole}/10 "
        f"(repeat_factor={plan.repeat_factor})",
    )


def test_c06_wordpiece_golden():
    """Tokenizing a word absent from the vocabulary yields its exact pieces."""
    vocab = Vocabulary(SPECIAL_TOKENS + ["app", "##end", "##ici", "##tis"])
    assert "appendicitis" not in vocab
    from bpt.tokenizer import wordpiece_tokenize

    pieces = wordpiece_tokenize("appendicitis", vocab).tokens
    assert pieces == ["app", "##end", "##ici", "##tis"]
    announce("C06 wordpiece golden", f"pieces={pieces}")


def test_c07_bpe_oracle_equivalence():
    """Trainer merge sequences equal the brute-force pair-counting oracle's
    on 20 random tiny corpora (<= 20 distinct words)."""
    import random

    for trial in range(20):
        r = random.Random(9000 + trial)
        words = {}
        for _ in range(r.randint(1, 20)):
            words["".join(r.choice("abcdef") for _ in range(r.randint(1, 6)))] = r.randint(1, 9)
        alphabet = {s for w in words for s in word_symbols(w)}
        target = len(SPECIAL_TOKENS) + len(alphabet) + r.randint(1, 15)
        min_freq = r.choice([1, 2])
        vocab, _ = train_bpe(words, target_size=target, min_frequency=min_freq)
        oracle_tokens, oracle_merges = bpe_oracle(words, target, SPECIAL_TOKENS, min_freq)
        assert vocab.merges == oracle_merges, f"trial {trial}"
        assert vocab.tokens == oracle_tokens, f"trial {trial}"
    announce("C07 bpe oracle equivalence", "20/20 merge sequences identical")


def test_c08_duplicate_factor(acc_lexicon, acc_vocab):
    """dupe_factor=k gives exactly k x the instances, the same segment-pair
    multiset, and fresh mask patterns."""
    from bpt.corpus import Document, Origin

    tokenizer = WordPieceTokenizer(acc_vocab)
    rng = SplitRng(555)
    docs = [
        Document(f"d#{i}", Origin.SMALL, make_document_sentences(rng, acc_lexicon, 12))
        for i in range(6)
    ]
    k = 3
    base_cfg = InstanceConfig(max_seq_length=64, dupe_factor=1, n_splits=2, master_seed=9)
    dupe_cfg = InstanceConfig(max_seq_length=64, dupe_factor=k, n_splits=2, master_seed=9)
    ones = list(generate_conventional(docs, tokenizer, base_cfg)[0])
    ks = list(generate_conventional(docs, tokenizer, dupe_cfg)[0])
    assert len(ks) == k * len(ones)

    def pair_key(inst):
        ids = inst.token_ids.copy()
        ids[inst.masked_positions] = inst.masked_labels
        ids = ids.tolist()
        seps = [i for i, t in enumerate(ids) if t == acc_vocab.sep_id]
        return tuple(ids[1 : seps[0]]), tuple(ids[seps[0] + 1 : seps[1]])

    multi_one = Counter(pair_key(i) for i in ones)
    multi_k = Counter(pair_key(i) for i in ks)
    assert multi_k == Counter({key: k * n for key, n in multi_one.items()})
    assert {i.payload() for i in ks} > {i.payload() for i in ones}  # masks differ
    announce("C08 duplicate factor", f"{len(ones)} -> {len(ks)} instances at k={k}")


def test_c09_determinism_across_threads(workdir, ratio_corpora, acc_vocab):
    """Identical config, seed and inputs give byte-identical files at
    --threads 1, 4, and 8."""
    small, _ = ratio_corpora
    small_path = workdir / "ratio_small.txt"
    vocab_path = workdir / "vocab.txt"
    outputs = []
    for threads in (1, 4, 8):
        out = workdir / f"det_t{threads}.bin"
        code = cli_main([
            "create-instances", "--mode", "simpt",
            "--small", str(small_path), "--large", str(small_path),
            "--vocab", str(vocab_path), "--out", str(out),
            "--rounds", "4", "--shards-per-corpus", "5",
            "--each-file-size", "30KB", "--max-seq-length", "128",
            "--seed", "4242", "--threads", str(threads),
        ])
        assert code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]
    assert len(outputs[0]) > 1000
    announce("C09 determinism", f"3 runs, {len(outputs[0])} bytes each, identical")


def test_c10_round_trips(workdir, ratio_corpora, acc_vocab, acc_lexicon):
    """Shard, vocabulary, and instance-file round-trips are lossless;
    corrupted fixtures raise the named errors."""
    small, _ = ratio_corpora
    # corpus -> shards -> files -> reload reproduces the documents exactly
    shards = split_corpus(small, SHARD_BYTES)
    assert [d for s in shards for d in s.documents] == small.documents
    shard_file = workdir / "shard0.txt"
    shard_file.write_text(write_document_text(shards[0].documents), encoding="utf-8")
    reloaded = load_corpus(shard_file, "sP", "small")
    assert [d.sentences for d in reloaded.documents] == [
        d.sentences for d in shards[0].documents
    ]

    # vocabulary file round-trip
    vpath, mpath = workdir / "rt_vocab.txt", workdir / "rt_merges.txt"
    acc_vocab.save(vpath, mpath)
    loaded = Vocabulary.load(vpath, mpath)
    assert loaded.tokens == acc_vocab.tokens
    assert loaded.merges == acc_vocab.merges

    # instance write/read round-trip
    from bpt.corpus import Document, Origin

    rng = SplitRng(31)
    docs = [
        Document(f"rt#{i}", Origin.SMALL, make_document_sentences(rng, acc_lexicon, 10))
        for i in range(4)
    ]
    cfg = InstanceConfig(max_seq_length=64, master_seed=3)
    from bpt.instances import create_instances_from_documents

    insts = create_instances_from_documents(docs, WordPieceTokenizer(acc_vocab), cfg, SplitRng(3))
    rt_path = workdir / "rt.bin"
    write_instances(insts, rt_path, acc_vocab, cfg)
    back = list(read_instances(rt_path, expected_vocab=acc_vocab))
    assert [i.payload() for i in back] == [i.payload() for i in insts]

    # corrupted fixtures -> named errors
    raw = rt_path.read_bytes()
    bad_magic = workdir / "bad_magic.bin"
    bad_magic.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(BadMagicError):
        list(read_instances(bad_magic))

    bad_version = workdir / "bad_version.bin"
    bad_version.write_bytes(raw[:4] + (99).to_bytes(2, "little") + raw[6:])
    with pytest.raises(BadVersionError):
        list(read_instances(bad_version))

    flipped = workdir / "rt.bin"  # corrupt in place so the manifest checksum applies
    body = bytearray(raw)
    body[30] ^= 0xFF
    flipped.write_bytes(bytes(body))
    with pytest.raises(ChecksumMismatchError):
        list(read_instances(flipped))
    flipped.write_bytes(raw)  # restore

    with pytest.raises(VocabHashMismatchError):
        list(read_instances(rt_path, expected_vocab=Vocabulary(SPECIAL_TOKENS + ["zzz"])))

    truncated = workdir / "truncated.bin"
    truncated.write_bytes(raw[:-5])
    with pytest.raises(TruncatedFileError):
        list(read_instances(truncated))

    announce("C10 round trips", "shards, vocabulary, instances lossless; 5 named corruption errors")


def test_c11_mesh_fixture_hand_labeled():
    """20 hand-labeled records classify with zero disagreements under the
    rule: included prefix present AND no excluded prefix AND year passes."""
    ruleset = load_ruleset("sP")  # includes C, A13, B01.650, ...; excludes N, G, Z, ...; min_year 2011
    fixtures = [
        # (id, tree_numbers, year, expected_included)
        ("r01", ["C04.557.337"], 2015, True),
        ("r02", ["C04.557.337", "N06.850"], 2015, False),
        ("r03", [], 2015, False),
        ("r04", ["C04"], 2008, False),
        ("r05", ["A13.869"], 2012, True),
        ("r06", ["B01.650.940.800"], 2014, True),
        ("r07", ["B01.300"], 2014, False),
        ("r08", ["C22.1"], 2020, True),
        ("r09", ["Q99.001"], 2020, False),
        ("r10", ["C04", "Z01.542"], 2020, False),
        ("r11", ["D26.255"], 2011, True),
        ("r12", ["C04", "G17.035"], 2019, False),
        ("r13", ["C"], 2013, True),
        ("r14", ["A16.254", "A18.024"], 2016, True),
        ("r15", ["E03.155"], 2016, False),
        ("r16", ["C04"], None, False),
        ("r17", ["C04"], 2011, True),
        ("r18", ["C04"], 2010, False),
        ("r19", ["B05.050", "L01.224"], 2018, False),
        ("r20", ["C99", "E05.318"], 2018, False),
    ]
    records = [ArticleRecord(rid, trees, year=year, text="t\n") for rid, trees, year, _ in fixtures]
    included, report = select_articles(records, ruleset)
    got = {r.article_id for r in included}
    expected = {rid for rid, _, _, want in fixtures if want}
    assert got == expected, f"disagreements: {got.symmetric_difference(expected)}"
    assert report.total == 20 and report.skipped == 0
    announce("C11 mesh filter", f"{len(expected)}/20 included, zero disagreements")


def test_manifest_carries_statistics(big_instance_file):
    """The manifest sidecar exposes the generation statistics verify/compare use."""
    path, report = big_instance_file
    manifest = json.loads(manifest_path(path).read_text())
    stats = manifest["statistics"]
    assert stats["instances"] == report.instances
    assert stats["distinct_negative_pairs"] == report.distinct_negative_pairs
    assert manifest["instance_count"] == report.instances
