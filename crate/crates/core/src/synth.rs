//! Seeded generator of C source trees with planted vulnerability signal.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CveLabelEntry;
use crate::error::{Error, Result};

pub const LABEL_FILE: &str = "cve_labels.csv";
pub const SOURCE_DIR: &str = "src";

/// Share of statements drawn from the risky pool in every function.
const BASE_RISK: f64 = 0.06;
/// Extra risky share for labeled functions at full strength.
const PLANTED_RISK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_functions: usize,
    pub vuln_fraction: f64,
    /// 0 gives identical statement distributions for both classes.
    pub dialect_signal_strength: f64,
    #[serde(default = "default_per_file")]
    pub functions_per_file: usize,
}

fn default_per_file() -> usize {
    50
}

impl SynthSpec {
    pub fn new(num_functions: usize, vuln_fraction: f64, dialect_signal_strength: f64) -> Self {
        SynthSpec {
            num_functions,
            vuln_fraction,
            dialect_signal_strength,
            functions_per_file: default_per_file(),
        }
    }

    pub fn labeled_count(&self) -> usize {
        ((self.num_functions as f64 * self.vuln_fraction).round() as usize).clamp(1, self.num_functions)
    }

    fn validate(&self) -> Result<()> {
        if self.num_functions == 0 {
            return Err(Error::Config("num_functions must be positive".into()));
        }
        if !(self.vuln_fraction > 0.0 && self.vuln_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "vuln_fraction {} outside (0, 0.5]",
                self.vuln_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.dialect_signal_strength) {
            return Err(Error::Config(format!(
                "dialect_signal_strength {} outside [0, 1]",
                self.dialect_signal_strength
            )));
        }
        if self.functions_per_file == 0 {
            return Err(Error::Config("functions_per_file must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFile {
    /// Relative to the source root, `/`-separated.
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub files: Vec<SyntheticFile>,
    pub labels: Vec<CveLabelEntry>,
    /// Every generated function as (file, name).
    pub functions: Vec<(String, String)>,
}

const VERBS: &[&str] = &[
    "parse", "read", "write", "copy", "load", "store", "decode", "encode", "scan", "fill", "init", "reset",
    "check", "update", "build", "format", "merge", "split", "flush", "open",
];
const NOUNS: &[&str] = &[
    "header", "packet", "buffer", "record", "frame", "entry", "chunk", "table", "name", "path", "token",
    "field", "block", "value", "image", "stream", "config", "message", "key", "node",
];
const TYPES: &[&str] = &["int", "long", "unsigned", "size_t", "char *", "const char *", "uint8_t *", "void *"];
const RETURNS: &[&str] = &["int", "static int", "long", "static size_t", "void", "static void"];

const SUBSYSTEMS: &[&str] = &["net", "fs", "mm", "dev", "usb", "snd", "ipc", "sec", "drm", "blk"];
const ACTIONS: &[&str] = &[
    "alloc", "lookup", "get", "put", "find", "attach", "detach", "queue", "parse", "sync", "read", "write", "lock",
    "unlock", "map", "unmap",
];
const SUFFIXES: &[&str] = &["", "_locked", "_safe", "_range", "_entry"];
const FIELDS: &[&str] = &[
    "len", "size", "count", "flags", "offset", "state", "id", "mode", "type", "owner", "refcnt", "next", "prev",
    "data", "priv_data", "index", "limit", "head", "tail", "mask",
];
/// `{h}` is replaced by a helper name, `{f}` by a field name.
const HELPER_TEMPLATES: &[&str] = &[
    "total += {h}(src, n);",
    "if ({h}(buf, total) < 0) {\n        return_code = -1;\n    }",
    "state.{f} = {h}(state.{f});",
    "total += {h}(state.{f});",
    "{h}(&state, (int)n);",
    "state.{f} += (long)n;",
];
/// Probability that a safe statement calls into the helper pool.
const HELPER_SHARE: f64 = 0.4;

/// Pool of helper names sampled with weight 1/(rank+1).
struct Helpers {
    names: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl Helpers {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut names = Vec::with_capacity(SUBSYSTEMS.len() * ACTIONS.len() * SUFFIXES.len());
        for sub in SUBSYSTEMS {
            for act in ACTIONS {
                for suf in SUFFIXES {
                    names.push(format!("{sub}_{act}{suf}"));
                }
            }
        }
        names.shuffle(rng);
        let weights = WeightedIndex::new((0..names.len()).map(|r| 1.0 / (r + 1) as f64)).expect("positive weights");
        Helpers { names, weights }
    }

    fn statement(&self, rng: &mut ChaCha8Rng) -> String {
        let template = HELPER_TEMPLATES.choose(rng).expect("non-empty");
        let helper = &self.names[self.weights.sample(rng)];
        let field = FIELDS.choose(rng).expect("non-empty");
        template.replace("{h}", helper).replace("{f}", field)
    }
}

const SAFE: &[&str] = &[
    "total += n % 7;",
    "if (n > sizeof(buf)) {\n        n = sizeof(buf);\n    }",
    "strncpy(buf, src, sizeof(buf) - 1);",
    "snprintf(buf, sizeof(buf), \"%d\", total);",
    "for (i = 0; i < (int)n; i++) {\n        total += src[i];\n    }",
    "memset(buf, 0, sizeof(buf));",
    "if (fgets(buf, sizeof(buf), stdin) == NULL) {\n        return_code = -1;\n    }",
    "if (src == NULL) {\n        return_code = -1;\n    }",
    "log_event(total, \"step {}\");",
    "total = clamp_value(total, 0, 255);",
    "/* keep the counters in sync */\n    total ^= (long)n;",
    "while (n > 0 && total < 1024) {\n        total += n--;\n    }",
    "switch (total & 3) {\n    case 0:\n        total++;\n        break;\n    default:\n        total--;\n    }",
    "buf[sizeof(buf) - 1] = '\\0';",
    "total += lookup_table[total & 15];",
    "if (check_bounds(n, sizeof(buf)) != 0) {\n        return_code = -2;\n    }",
];
const RISKY: &[&str] = &[
    "strcpy(buf, src);",
    "memcpy(buf, src, n);",
    "sprintf(buf, \"%s\", src);",
    "gets(buf);",
    "strcat(buf, src);",
    "char *tmp = alloca(n);",
    "buf[n] = src[n];",
    "scanf(\"%s\", buf);",
];

fn function_text(rng: &mut ChaCha8Rng, helpers: &Helpers, name: &str, risky_share: f64) -> String {
    let ret = *RETURNS.choose(rng).expect("non-empty");
    let nparams = rng.gen_range(0..=4);
    let params = if nparams == 0 {
        "void".to_string()
    } else {
        (0..nparams)
            .map(|k| {
                let ty = if k == 0 { "const char *" } else { TYPES.choose(rng).expect("non-empty") };
                let pname = match k {
                    0 => "src".to_string(),
                    1 => "n".to_string(),
                    _ => format!("arg{k}"),
                };
                if ty.ends_with('*') {
                    format!("{ty}{pname}")
                } else {
                    format!("{ty} {pname}")
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut out = String::new();
    if rng.gen_bool(0.3) {
        let _ = writeln!(out, "/* {name}: {} */", NOUNS.choose(rng).expect("non-empty"));
    }
    let _ = writeln!(out, "{ret} {name}({params})");
    out.push_str("{\n");
    let bufsize = [16, 32, 64, 128, 256].choose(rng).expect("non-empty");
    let _ = writeln!(out, "    char buf[{bufsize}];");
    out.push_str("    long total = 0;\n    int i = 0;\n    int return_code = 0;\n");
    if nparams == 0 {
        out.push_str("    const char *src = default_source();\n    size_t n = 8;\n");
    } else if nparams == 1 {
        out.push_str("    size_t n = strlen(src);\n");
    }
    let statements = rng.gen_range(3..=12);
    for _ in 0..statements {
        let stmt = if rng.gen_bool(risky_share) {
            RISKY.choose(rng).expect("non-empty").to_string()
        } else if rng.gen_bool(HELPER_SHARE) {
            helpers.statement(rng)
        } else {
            SAFE.choose(rng).expect("non-empty").to_string()
        };
        let _ = writeln!(out, "    {stmt}");
    }
    out.push_str("    (void)i;\n    (void)return_code;\n");
    if ret.ends_with("void") {
        out.push_str("    consume(buf, total);\n");
    } else {
        out.push_str("    return return_code + (int)total;\n");
    }
    out.push_str("}\n");
    out
}

fn file_preamble(rng: &mut ChaCha8Rng, index: usize) -> String {
    let mut out = String::new();
    out.push_str("#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n\n");
    let _ = writeln!(out, "#define MODULE_ID {index}");
    out.push_str("#define MAX_LEN(a, b) ((a) > (b) ? (a) : (b))\n\n");
    out.push_str("static struct module_state state;\n\n");
    if rng.gen_bool(0.5) {
        let _ = writeln!(out, "struct state_{index} {{\n    int count;\n    char tag[8];\n}};\n");
    }
    let _ = writeln!(out, "static const int lookup_table_{index}[4] = {{ 1, 2, 3, 4 }};\n");
    out
}

/// Builds the corpus in memory. Exactly `labeled_count()` functions are
/// labeled, chosen uniformly; all names are unique.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.num_functions;
    let mut positive = vec![false; n];
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    for &i in &idx[..spec.labeled_count()] {
        positive[i] = true;
    }
    let helpers = Helpers::new(&mut rng);
    let positive_share = BASE_RISK + spec.dialect_signal_strength * PLANTED_RISK;

    let mut files = Vec::new();
    let mut labels = Vec::new();
    let mut functions = Vec::new();
    for (file_index, chunk) in (0..n).collect::<Vec<_>>().chunks(spec.functions_per_file).enumerate() {
        let path = format!("{SOURCE_DIR}/module_{file_index:04}.c");
        let mut text = file_preamble(&mut rng, file_index);
        for &f in chunk {
            let name = format!(
                "{}_{}_{f}",
                VERBS.choose(&mut rng).expect("non-empty"),
                NOUNS.choose(&mut rng).expect("non-empty")
            );
            let share = if positive[f] { positive_share } else { BASE_RISK };
            text.push_str(&function_text(&mut rng, &helpers, &name, share));
            text.push('\n');
            if positive[f] {
                labels.push(CveLabelEntry {
                    cve_id: format!("CVE-{}-{}", 2015 + labels.len() % 6, 10_000 + labels.len()),
                    file_path: path.clone(),
                    function_name: name.clone(),
                });
            }
            functions.push((path.clone(), name));
        }
        files.push(SyntheticFile { path, text });
    }
    Ok(SyntheticCorpus {
        files,
        labels,
        functions,
    })
}

impl SyntheticCorpus {
    /// Writes every file under `root`, dropping the leading `src/`.
    pub fn write_sources(&self, root: &Path) -> Result<()> {
        for f in &self.files {
            let p = root.join(relative(&f.path));
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&p, &f.text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    /// Label CSV with paths relative to the source root.
    pub fn labels_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cve_id", "file_path", "function_name"])?;
        for l in &self.labels {
            w.write_record([l.cve_id.as_str(), relative(&l.file_path), l.function_name.as_str()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    /// Writes `<dir>/src/...` and `<dir>/cve_labels.csv`; returns
    /// (source root, label file).
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let root = dir.join(SOURCE_DIR);
        self.write_sources(&root)?;
        let label_path = dir.join(LABEL_FILE);
        std::fs::write(&label_path, self.labels_csv()?).map_err(|e| Error::io(&label_path, e))?;
        Ok((root, label_path))
    }
}

fn relative(path: &str) -> &str {
    path.strip_prefix(SOURCE_DIR).and_then(|p| p.strip_prefix('/')).unwrap_or(path)
}
