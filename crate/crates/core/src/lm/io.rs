//! Parameter and embedding files.
//!
//! Parameter file layout (UTF-8 text):
//!
//! ```text
//! #version vulnrank-lm-1
//! config <LmConfig as one-line JSON>
//! matrix <group> <rows> <cols>
//! <rows lines of <cols> space-separated f64 values>
//! ...
//! ```
//!
//! Groups appear in the order token_embedding, w_input, w_hidden, gate_bias,
//! decoder, decoder_bias. Values use shortest round-trip decimal formatting,
//! so a reload reproduces the parameters bit for bit.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{FunctionEmbedding, LmConfig, LmParameters, GROUPS};
use crate::error::{Error, Result};

pub const PARAMS_VERSION: &str = "#version vulnrank-lm-1";

pub fn params_to_string(params: &LmParameters, config: &LmConfig) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{PARAMS_VERSION}");
    let _ = writeln!(out, "config {}", serde_json::to_string(config)?);
    for ((name, (rows, cols)), values) in GROUPS.iter().zip(params.shapes()).zip(params.groups()) {
        let _ = writeln!(out, "matrix {name} {rows} {cols}");
        for r in 0..rows {
            let row = &values[r * cols..(r + 1) * cols];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    Ok(out)
}

pub fn params_from_str(text: &str) -> Result<(LmParameters, LmConfig)> {
    let bad = |msg: String| Error::Data(format!("LM parameter file: {msg}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(PARAMS_VERSION) {
        return Err(bad(format!("missing `{PARAMS_VERSION}` header")));
    }
    let config: LmConfig = match lines.next().and_then(|l| l.strip_prefix("config ")) {
        Some(json) => serde_json::from_str(json)?,
        None => return Err(bad("missing config line".into())),
    };
    let mut params = LmParameters::zeros(config.vocab_size, config.embed_dim, config.hidden_dim);
    let shapes = params.shapes();
    for (gi, name) in GROUPS.iter().enumerate() {
        let header = lines.next().ok_or_else(|| bad(format!("missing matrix {name}")))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let expected = shapes[gi];
        if parts.len() != 4
            || parts[0] != "matrix"
            || parts[1] != *name
            || parts[2].parse::<usize>().ok() != Some(expected.0)
            || parts[3].parse::<usize>().ok() != Some(expected.1)
        {
            return Err(bad(format!(
                "expected `matrix {name} {} {}`, found `{header}`",
                expected.0, expected.1
            )));
        }
        let dst = &mut params.groups_mut()[gi];
        for r in 0..expected.0 {
            let line = lines.next().ok_or_else(|| bad(format!("{name}: missing row {r}")))?;
            let row = &mut dst[r * expected.1..(r + 1) * expected.1];
            let mut n = 0;
            for (slot, tok) in row.iter_mut().zip(line.split_whitespace()) {
                *slot = tok
                    .parse()
                    .map_err(|_| bad(format!("{name}: bad value `{tok}`")))?;
                n += 1;
            }
            if n != expected.1 || line.split_whitespace().count() != expected.1 {
                return Err(bad(format!("{name}: row {r} has the wrong width")));
            }
        }
    }
    Ok((params, config))
}

pub fn write_params(path: &Path, params: &LmParameters, config: &LmConfig) -> Result<()> {
    std::fs::write(path, params_to_string(params, config)?).map_err(|e| Error::io(path, e))
}

pub fn read_params(path: &Path) -> Result<(LmParameters, LmConfig)> {
    params_from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// CSV `function_id,v1,...,vd`.
pub fn write_embeddings_csv(path: &Path, embeddings: &[FunctionEmbedding]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let d = embeddings.first().map_or(0, |e| e.vector.len());
    let mut header = String::from("function_id");
    for k in 1..=d {
        let _ = write!(header, ",v{k}");
    }
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for emb in embeddings {
        let mut line = emb.function_id.to_string();
        for v in &emb.vector {
            let _ = write!(line, ",{v}");
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<FunctionEmbedding>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let mut fields = rec.iter();
        let id = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: bad function_id", path.display())))?;
        let vector = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        out.push(FunctionEmbedding {
            function_id: id,
            vector,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::init_params;

    #[test]
    fn params_round_trip_bit_exact() {
        let cfg = LmConfig { seed: 11, ..LmConfig::new(9, 4) };
        let p = init_params(&cfg);
        let text = params_to_string(&p, &cfg).unwrap();
        let (q, c) = params_from_str(&text).unwrap();
        assert_eq!(c, cfg);
        assert_eq!(p, q);
        assert!(params_from_str(&text.replacen("matrix w_input 16 4", "matrix w_input 16 5", 1)).is_err());
    }

    #[test]
    fn embeddings_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let embs = vec![
            FunctionEmbedding { function_id: 0, vector: vec![0.1, -2.5e-7] },
            FunctionEmbedding { function_id: 5, vector: vec![1.0 / 3.0, 0.0] },
        ];
        write_embeddings_csv(&path, &embs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("function_id,v1,v2\n0,0.1,"));
        assert_eq!(read_embeddings_csv(&path).unwrap(), embs);
    }
}
