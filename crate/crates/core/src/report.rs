//! Result files written by the pipeline, PGM thumbnails, and the static
//! HTML report that lays them out as query rows and concept rows.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::explain::{Concept, ConceptPurity, SimilarityResult};
use crate::store::{read_json, to_byte, write_bytes};
use crate::surrogate::EvalReport;
use crate::tensor::Tensor;

pub const EVAL_FILE: &str = "eval.json";
pub const CONCEPTS_FILE: &str = "concepts.json";
pub const REPORT_FILE: &str = "report.html";
pub const THUMBS_DIR: &str = "thumbs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryExplanation {
    #[serde(flatten)]
    pub result: SimilarityResult,
    pub query_label: u32,
    pub baseline_prediction: u32,
    pub neighbor_labels: Vec<u32>,
}

/// Contents of `similar_<tag>.json`: one weight setting over all queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFile {
    pub tag: String,
    pub weights: Vec<f64>,
    pub top_k: usize,
    pub queries: Vec<QueryExplanation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConcepts {
    pub layer_name: String,
    pub purity: ConceptPurity,
    pub concepts: Vec<Concept>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptsFile {
    pub m: usize,
    pub layers: Vec<LayerConcepts>,
}

pub fn similarity_file_name(tag: &str) -> String {
    format!("similar_{tag}.json")
}

pub fn thumbnail_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index}.pgm")
}

/// Binary PGM bytes for one square grayscale image with values in `[0, 1]`.
pub fn encode_pgm(pixels: &[f32]) -> Result<Vec<u8>> {
    let side = (pixels.len() as f64).sqrt().round() as usize;
    if side == 0 || side * side != pixels.len() {
        return Err(FormatError::Invalid(format!(
            "{} pixels do not form a square image",
            pixels.len()
        ))
        .into());
    }
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| to_byte(v)));
    Ok(out)
}

/// Writes `<prefix>_<index>.pgm` for each index into `outdir`.
pub fn emit_thumbnails(images: &Tensor<f32>, indices: &[usize], outdir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= images.rows() {
            return Err(Error::Index(format!(
                "image {i} requested from {} images",
                images.rows()
            )));
        }
        let path = outdir.join(thumbnail_name(prefix, i));
        write_bytes(&path, &encode_pgm(images.row(i))?)?;
        written.push(path);
    }
    Ok(written)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em}\
table{border-collapse:collapse}td,th{border:1px solid #999;padding:4px 8px}\
.row{display:flex;gap:4px;align-items:flex-end;margin:6px 0}\
.cell{text-align:center;font-size:11px}\
.cell img{width:56px;height:56px;image-rendering:pixelated;border:2px solid transparent}\
.query img{border-color:red}.query .txt{color:red}\
.txt{display:inline-block;min-width:56px;border:1px solid #ccc;padding:2px}";

struct Page {
    html: String,
    with_images: bool,
    thumbs: PathBuf,
    missing: Vec<PathBuf>,
}

impl Page {
    fn cell(&mut self, class: &str, prefix: &str, index: usize, caption: &str) {
        let _ = write!(self.html, "<div class=\"cell {class}\">");
        if self.with_images {
            let name = thumbnail_name(prefix, index);
            let path = self.thumbs.join(&name);
            if !path.is_file() {
                self.missing.push(path);
            }
            let _ = write!(
                self.html,
                "<img src=\"{THUMBS_DIR}/{}\" alt=\"{} {index}\" /><br />",
                escape(&name),
                escape(prefix)
            );
        } else {
            let _ = write!(self.html, "<span class=\"txt\">#{index}</span><br />");
        }
        let _ = write!(self.html, "{}</div>", escape(caption));
    }
}

/// Renders `report.html` in `results_dir` from `eval.json`, every
/// `similar_*.json` and `concepts.json` present. With `with_images`, each
/// sample is shown by its thumbnail under `thumbs/`, which must exist.
pub fn emit_html_report(results_dir: &Path, with_images: bool) -> Result<PathBuf> {
    let eval_path = results_dir.join(EVAL_FILE);
    if !eval_path.is_file() {
        return Err(Error::Missing(vec![eval_path]));
    }
    let eval: EvalSummary = read_json(&eval_path)?;

    let mut similarity_files: Vec<PathBuf> = fs::read_dir(results_dir)
        .map_err(|e| Error::io(results_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("similar_") && n.ends_with(".json"))
        })
        .collect();
    similarity_files.sort();

    let mut page = Page {
        html: String::new(),
        with_images,
        thumbs: results_dir.join(THUMBS_DIR),
        missing: Vec::new(),
    };
    page.html.push_str(
        "<!DOCTYPE html>\n<html xmlns=\"http://www.w3.org/1999/xhtml\" lang=\"en\">\n<head>\n\
         <meta charset=\"utf-8\" />\n<title>Activation clustering report</title>\n",
    );
    let _ = writeln!(page.html, "<style>{STYLE}</style>\n</head>\n<body>");
    page.html.push_str("<h1>Activation clustering report</h1>\n<h2>Surrogate metrics</h2>\n");
    page.html.push_str(
        "<table class=\"metrics\">\n<tr><th>split</th><th>accuracy</th><th>fidelity</th><th>weights</th></tr>\n",
    );
    for (name, r) in [("train", &eval.train), ("test", &eval.test)] {
        let w: Vec<String> = r.weights.iter().map(|w| format!("{w:.3}")).collect();
        let _ = writeln!(
            page.html,
            "<tr><td>{name}</td><td>{:.4}</td><td>{:.4}</td><td>{}</td></tr>",
            r.accuracy,
            r.fidelity,
            w.join(", ")
        );
    }
    page.html.push_str("</table>\n");

    for path in &similarity_files {
        let file: SimilarityFile = read_json(path)?;
        let w: Vec<String> = file.weights.iter().map(|w| format!("{w:.3}")).collect();
        let _ = writeln!(
            page.html,
            "<h2>Similar training examples: {} (weights {})</h2>\n<div class=\"similarity\">",
            escape(&file.tag),
            w.join(", ")
        );
        for q in &file.queries {
            page.html.push_str("<div class=\"row\">");
            let caption = format!("y={} f={}", q.query_label, q.baseline_prediction);
            page.cell("query", "test", q.result.query_id, &caption);
            for (n, label) in q.result.neighbors.iter().zip(&q.neighbor_labels) {
                page.cell("neighbor", "train", n.train_index, &format!("y={label}"));
            }
            page.html.push_str("</div>\n");
        }
        page.html.push_str("</div>\n");
    }

    let concepts_path = results_dir.join(CONCEPTS_FILE);
    if concepts_path.is_file() {
        let file: ConceptsFile = read_json(&concepts_path)?;
        for layer in &file.layers {
            let _ = writeln!(
                page.html,
                "<h2>Concepts: {} (mean purity {:.3})</h2>\n<div class=\"concepts\">",
                escape(&layer.layer_name),
                layer.purity.mean
            );
            for (c, purity) in layer.concepts.iter().zip(&layer.purity.per_concept) {
                let _ = write!(
                    page.html,
                    "<div class=\"row\"><div class=\"cell\">cluster {}<br />purity {purity:.2}</div>",
                    c.cluster
                );
                for &i in &c.members {
                    page.cell("member", "train", i, "");
                }
                page.html.push_str("</div>\n");
            }
            page.html.push_str("</div>\n");
        }
    }
    page.html.push_str("</body>\n</html>\n");

    if !page.missing.is_empty() {
        page.missing.sort();
        page.missing.dedup();
        return Err(Error::Missing(page.missing));
    }
    let out = results_dir.join(REPORT_FILE);
    write_bytes(&out, page.html.as_bytes())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::Neighbor;
    use crate::store::write_json;

    fn report(acc: f64) -> EvalReport {
        EvalReport {
            accuracy: acc,
            fidelity: 1.0,
            confusion: vec![vec![1, 0], vec![0, 1]],
            weights: vec![0.5, 0.5],
        }
    }

    #[test]
    fn pgm_bytes() {
        let bytes = encode_pgm(&[0.0, 1.0, 0.5, 0.0]).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 128, 0]);
        assert!(encode_pgm(&[0.0; 3]).is_err());
    }

    #[test]
    fn thumbnails_named_by_index() {
        let dir = tempfile::tempdir().unwrap();
        let images = Tensor::<f32>::zeros(&[3, 4]);
        let paths = emit_thumbnails(&images, &[2, 0], dir.path(), "train").unwrap();
        assert!(paths[0].ends_with("train_2.pgm"));
        assert_eq!(fs::read(&paths[1]).unwrap()[11..], [0, 0, 0, 0]);
        assert!(matches!(emit_thumbnails(&images, &[3], dir.path(), "train"), Err(Error::Index(_))));
        let odd = Tensor::<f32>::zeros(&[1, 5]);
        assert!(matches!(emit_thumbnails(&odd, &[0], dir.path(), "train"), Err(Error::Format(_))));
    }

    #[test]
    fn missing_inputs_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        match emit_html_report(dir.path(), true) {
            Err(Error::Missing(p)) => assert!(p[0].ends_with(EVAL_FILE)),
            other => panic!("{other:?}"),
        }
        write_json(dir.path().join(EVAL_FILE), &EvalSummary { train: report(1.0), test: report(0.5) }).unwrap();
        let file = SimilarityFile {
            tag: "equal".into(),
            weights: vec![0.5, 0.5],
            top_k: 1,
            queries: vec![QueryExplanation {
                result: SimilarityResult {
                    query_id: 3,
                    weights: vec![0.5, 0.5],
                    neighbors: vec![Neighbor {
                        train_index: 9,
                        combined_score: 0.0,
                        layer_sq_distances: vec![0.0, 0.0],
                    }],
                },
                query_label: 1,
                baseline_prediction: 1,
                neighbor_labels: vec![1],
            }],
        };
        write_json(dir.path().join(similarity_file_name("equal")), &file).unwrap();
        match emit_html_report(dir.path(), true) {
            Err(Error::Missing(p)) => {
                assert_eq!(p.len(), 2);
                assert!(p.iter().any(|p| p.ends_with("test_3.pgm")));
                assert!(p.iter().any(|p| p.ends_with("train_9.pgm")));
            }
            other => panic!("{other:?}"),
        }
        let html = fs::read_to_string(emit_html_report(dir.path(), false).unwrap()).unwrap();
        assert!(html.contains("#9"));
    }
}
