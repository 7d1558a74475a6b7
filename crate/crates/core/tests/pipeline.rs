//! End-to-end pipeline integration: every stage hands the next one a
//! file (model table, lexicon, charset, LM table, graph directory,
//! lattices), exercising the on-disk formats rather than in-memory
//! handoffs. A noiseless round trip must reproduce the input text
//! exactly.

use std::path::{Path, PathBuf};

use sublex::corpus::{
    build_character_inventory, load_corpus, split_words, unify_inventories, CharacterInventory,
};
use sublex::decode::{decode_lattice, DecodeConfig};
use sublex::eval::{evaluate_set, tune_hyperparameters};
use sublex::graph::{
    build_search_graph, frame_table, graph_stats, read_graph_dir, unit_lexicon_entries,
    write_graph_dir,
};
use sublex::lattice::{read_lattice, synthesize_lattice, write_lattice, NoiseSpec};
use sublex::lm::{count_ngrams, estimate_kneser_ney, NgramModel};
use sublex::multigram::{em_train, tokenize_corpus, EmConfig, MultigramLexicon, MultigramModel};

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

#[test]
fn file_based_pipeline_round_trips_noiseless_text() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path();

    // Stage 1: corpus preparation and the character inventory.
    let fr: Vec<_> = load_corpus(&data_file("train_fr.txt"), "fr").unwrap()[..150].to_vec();
    let en: Vec<_> = load_corpus(&data_file("train_en.txt"), "en").unwrap()[..150].to_vec();
    let inventory = unify_inventories(
        &build_character_inventory(&fr).unwrap(),
        &build_character_inventory(&en).unwrap(),
    );
    inventory.write_charset(&work.join("charset.tsv")).unwrap();
    let inventory = CharacterInventory::read_charset(&work.join("charset.tsv")).unwrap();

    // Stage 2: unit models, persisted and reloaded per language.
    let mut lines = fr.clone();
    lines.extend(en.iter().cloned());
    let mut seqs: Vec<Vec<String>> = Vec::new();
    let mut lexicons: Vec<MultigramLexicon> = Vec::new();
    for (tag, part) in [("fr", &fr), ("en", &en)] {
        let words: Vec<String> = part.iter().flat_map(|l| split_words(&l.text)).collect();
        let config = EmConfig {
            d_max: 3,
            max_iters: 30,
            rel_tol: 1e-6,
            language_tag: tag.to_string(),
        };
        let outcome = em_train(&words, &config).unwrap();
        let model_path = work.join(format!("{tag}.units.tsv"));
        outcome.model.write_tsv(&model_path).unwrap();
        let model = MultigramModel::read_tsv(&model_path).unwrap();
        assert_eq!(model.d_max(), 3);

        let part_seqs = tokenize_corpus(part, &model);
        let lexicon = MultigramLexicon::from_tokenized(&part_seqs, tag);
        let lex_path = work.join(format!("{tag}.lexicon.tsv"));
        lexicon.write_tsv(&lex_path).unwrap();
        let lexicon = MultigramLexicon::read_tsv(&lex_path).unwrap();
        assert!(!lexicon.is_empty());
        seqs.extend(part_seqs);
        lexicons.push(lexicon);
    }
    let merged = sublex::multigram::merge_lexicons(&lexicons);

    // Stage 3: the n-gram model, through its text format.
    let counts = count_ngrams(&seqs, 3, false).unwrap();
    let lm = estimate_kneser_ney(&counts).unwrap();
    let lm_path = work.join("units.arpa");
    lm.write_arpa(&lm_path).unwrap();
    let lm = NgramModel::read_arpa(&lm_path).unwrap();
    assert_eq!(lm.order(), 3);

    // Stage 4: the search graph, through its directory format.
    let entries = unit_lexicon_entries(merged.iter().map(str::to_string));
    let graph = build_search_graph(&lm, entries, &inventory).unwrap();
    let graph_dir = work.join("graph");
    write_graph_dir(&graph, &graph_dir).unwrap();
    let graph = read_graph_dir(&graph_dir).unwrap();
    let stats = graph_stats(&graph.fst);
    assert!(stats.states > 0 && stats.arcs > 0);

    // Stage 5: noiseless lattices, through the lattice file format.
    let labels = frame_table(&inventory);
    let test_lines: Vec<String> = lines[..20].iter().map(|l| l.text.clone()).collect();
    let mut set = Vec::new();
    for (i, text) in test_lines.iter().enumerate() {
        let spec = NoiseSpec {
            confusion_mass: 0.0,
            frames_per_char: 2,
            blank_bias: 0.7,
            seed: 7 + i as u64,
        };
        let lat = synthesize_lattice(text, &labels, &spec).unwrap();
        let lat_path = work.join(format!("{i:06}.lat"));
        write_lattice(&lat, &lat_path).unwrap();
        let lat = read_lattice(&lat_path, graph.fst.input_symbols()).unwrap();
        set.push((lat, text.clone()));
    }

    // Stage 6: decode and evaluate. Training text is fully covered by
    // its own lexicon, so the noiseless round trip must be exact.
    let cfg = DecodeConfig {
        gamma: 1.0,
        beta: 1.0,
        beam: 12.0,
        n_best: 1,
    };
    let report = evaluate_set(&graph, &set, &cfg).unwrap();
    assert_eq!(report.failed, 0, "no line may fail to decode");
    assert_eq!(report.wer, 0.0, "noiseless WER must be exact");
    assert_eq!(report.cer, 0.0, "noiseless CER must be exact");
    assert_eq!(report.coverage, 100.0);

    // Single-lattice decode agrees with the batch path.
    let hyps = decode_lattice(&set[0].0, &graph, &cfg).unwrap();
    assert_eq!(hyps[0].text, set[0].1);

    // Stage 7: the tuner runs over a small grid and lands on a zero-WER
    // setting (every setting is zero here; ties resolve to the smallest).
    let tuned = tune_hyperparameters(&graph, &set[..5], &[0.8, 1.0], &[1.0, 2.0], 12.0).unwrap();
    assert_eq!(tuned.wer, 0.0);
    assert_eq!(tuned.gamma, 0.8);
    assert_eq!(tuned.beta, 1.0);
}
