mod common;

use std::fs;

use actclust::explain::{Neighbor, SimilarityResult};
use actclust::report::*;
use actclust::store::{read_dump, read_idx_images, read_idx_labels, write_dump, write_json, ActivationDump};
use actclust::surrogate::EvalReport;
use actclust::Tensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pgm_decodes_with_an_independent_reader(bytes in prop::collection::vec(any::<u8>(), 49)) {
        let pixels: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        let encoded = encode_pgm(&pixels).unwrap();
        let img = image::load_from_memory_with_format(&encoded, image::ImageFormat::Pnm).unwrap().to_luma8();
        prop_assert_eq!(img.dimensions(), (7, 7));
        prop_assert_eq!(img.into_raw(), bytes);
    }

    #[test]
    fn activation_dumps_round_trip(name in "[a-z0-9_]{1,12}", rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let t = common::random_f32(rows, cols, 100.0, seed);
        let dump = ActivationDump::new(name, &t).unwrap();
        let path = dir.path().join("x.actv");
        write_dump(&dump, &path).unwrap();
        prop_assert_eq!(fs::metadata(&path).unwrap().len(), dump.encoded_len());
        prop_assert_eq!(read_dump(&path).unwrap(), dump);
    }
}

#[test]
fn full_scale_pixels() {
    let bytes = encode_pgm(&[1.0; 4]).unwrap();
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm).unwrap().to_luma8();
    assert!(img.pixels().all(|p| p.0[0] == 255));
}

fn parse_xhtml(html: &str) -> roxmltree::Document<'_> {
    let opts = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    roxmltree::Document::parse_with_options(html, opts).unwrap()
}

fn eval() -> EvalSummary {
    let r = EvalReport {
        accuracy: 0.9,
        fidelity: 0.95,
        confusion: vec![vec![1, 0], vec![0, 1]],
        weights: vec![0.5, 0.5],
    };
    EvalSummary { train: r.clone(), test: r }
}

fn query(id: usize, k: usize) -> QueryExplanation {
    QueryExplanation {
        result: SimilarityResult {
            query_id: id,
            weights: vec![0.5, 0.5],
            neighbors: (0..k)
                .map(|i| Neighbor {
                    train_index: i,
                    combined_score: i as f64,
                    layer_sq_distances: vec![i as f64; 2],
                })
                .collect(),
        },
        query_label: 1,
        baseline_prediction: 0,
        neighbor_labels: vec![1; k],
    }
}

#[test]
fn empty_results_give_a_metrics_only_page() {
    let dir = tempfile::tempdir().unwrap();
    write_json(dir.path().join(EVAL_FILE), &eval()).unwrap();
    let html = fs::read_to_string(emit_html_report(dir.path(), true).unwrap()).unwrap();
    let doc = parse_xhtml(&html);
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("table")).count(), 1);
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("img")).count(), 0);
}

#[test]
fn query_rows_hold_k_plus_one_images() {
    let dir = tempfile::tempdir().unwrap();
    let k = 4;
    write_json(dir.path().join(EVAL_FILE), &eval()).unwrap();
    for tag in ["equal", "first", "last"] {
        let file = SimilarityFile {
            tag: tag.into(),
            weights: vec![0.5, 0.5],
            top_k: k,
            queries: vec![query(3, k), query(8, k)],
        };
        write_json(dir.path().join(similarity_file_name(tag)), &file).unwrap();
    }
    let images = Tensor::<f32>::zeros(&[10, 16]);
    let thumbs = dir.path().join(THUMBS_DIR);
    emit_thumbnails(&images, &(0..k).collect::<Vec<_>>(), &thumbs, "train").unwrap();
    emit_thumbnails(&images, &[3, 8], &thumbs, "test").unwrap();
    let html = fs::read_to_string(emit_html_report(dir.path(), true).unwrap()).unwrap();
    let doc = parse_xhtml(&html);
    let sections: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("similarity"))
        .collect();
    assert_eq!(sections.len(), 3);
    for s in sections {
        let rows: Vec<_> = s.children().filter(|n| n.attribute("class") == Some("row")).collect();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert_eq!(row.descendants().filter(|n| n.has_tag_name("img")).count(), k + 1);
            let first = row.descendants().find(|n| n.has_tag_name("img")).unwrap();
            assert!(first.attribute("src").unwrap().starts_with("thumbs/test_"));
        }
    }
}

#[test]
fn mnist_idx_files_decode() {
    if !common::mnist_available() {
        eprintln!("MNIST not found under {}; skipping", common::mnist_dir().display());
        return;
    }
    let dir = common::mnist_dir();
    let (x, rows, cols) = read_idx_images(dir.join("train-images-idx3-ubyte")).unwrap();
    assert_eq!((x.rows(), rows, cols), (60000, 28, 28));
    let sum: u64 = x.row(0).iter().map(|&v| (v * 255.0).round() as u64).sum();
    assert_eq!(sum, 27525);
    assert_eq!(read_idx_labels(dir.join("train-labels-idx1-ubyte")).unwrap().labels()[0], 5);
    assert_eq!(read_idx_labels(dir.join("t10k-labels-idx1-ubyte")).unwrap().len(), 10000);
}
