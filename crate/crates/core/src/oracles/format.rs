//! Problem-instance text format, version 1.
//!
//! ```text
//! # comment lines start with '#'
//! format = 1
//! id = ising-small
//! kind = ising            # ising | hmm | random_mlp | random_rnn | lookup
//! vocabulary = ACDEFGHIKLMNPQRSTVWY
//! length = 20
//! rounds = 10
//! batch_size = 100
//! seed = 7
//! beta = 0.41             # kind-specific scalars follow
//! reference = MKV...
//!
//! [substitution]          # whitespace-separated matrix rows
//! ...
//! [init]                  # optional: "SEQUENCE<TAB>reward"
//! ```
//!
//! Kind-specific content:
//!
//! * `ising`: scalars `beta`, `reference`; sections `[substitution]`,
//!   `[coupling]` (|V| rows each) and `[contacts]` ("i j" per line, 0-based).
//! * `hmm`: scalar `match_states`; sections `[match_emissions]` (M rows),
//!   `[insert_emissions]` (M+1 rows), `[transitions]` (M+1 rows of nine
//!   numbers: from match, insert, delete, each to match, insert, delete).
//! * `random_mlp`: scalars `conv` (true/false), `dense` (comma list), `weight_seed`.
//! * `random_rnn`: scalars `lstm` (comma list), `weight_seed`.
//! * `lookup`: section `[table]` with one "SEQUENCE<TAB>reward" line per
//!   sequence of `V^L`.
//!
//! Floats are written in shortest round-trip form so a parse/write cycle is
//! lossless.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;

use super::hmm::{ProfileHmm, Transition};
use super::ising::IsingOracle;
use super::lookup::LookupOracle;
use super::randnet::{Architecture, RandomNetOracle};
use super::{Oracle, OracleInstance, OracleKind};
use crate::error::{Error, Result};
use crate::seq::{Sequence, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;

struct Section {
    line: usize,
    lines: Vec<(usize, String)>,
}

struct Document {
    scalars: IndexMap<String, (usize, String)>,
    sections: IndexMap<String, Section>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut scalars = IndexMap::new();
        let mut sections: IndexMap<String, Section> = IndexMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if sections.contains_key(name) {
                    return Err(parse_err(n, format!("duplicate section [{name}]")));
                }
                sections.insert(name.to_string(), Section { line: n, lines: Vec::new() });
                current = Some(name.to_string());
                continue;
            }
            match &current {
                Some(name) => sections[name].lines.push((n, trimmed.to_string())),
                None => {
                    let content = trimmed.split('#').next().unwrap_or("").trim();
                    let (k, v) = content
                        .split_once('=')
                        .ok_or_else(|| parse_err(n, format!("expected `key = value`, got `{trimmed}`")))?;
                    let key = k.trim().to_string();
                    if scalars.insert(key.clone(), (n, v.trim().to_string())).is_some() {
                        return Err(parse_err(n, format!("duplicate key `{key}`")));
                    }
                }
            }
        }
        Ok(Self { scalars, sections })
    }

    fn raw(&self, key: &str) -> Result<(usize, &str)> {
        self.scalars
            .get(key)
            .map(|(n, v)| (*n, v.as_str()))
            .ok_or_else(|| parse_err(0, format!("missing key `{key}`")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (n, v) = self.raw(key)?;
        v.parse().map_err(|e| parse_err(n, format!("`{key}`: {e}")))
    }

    fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .get(name)
            .ok_or_else(|| parse_err(0, format!("missing section [{name}]")))
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
        let sec = self.section(name)?;
        if sec.lines.len() != rows {
            return Err(parse_err(sec.line, format!("[{name}] needs {rows} rows, found {}", sec.lines.len())));
        }
        sec.lines
            .iter()
            .map(|(n, line)| {
                let row = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| parse_err(*n, format!("`{t}`: {e}"))))
                    .collect::<Result<Vec<f64>>>()?;
                if row.len() != cols {
                    return Err(parse_err(*n, format!("expected {cols} values, found {}", row.len())));
                }
                Ok(row)
            })
            .collect()
    }

    fn check_keys(&self, allowed: &[&str], sections: &[&str]) -> Result<()> {
        for (k, (n, _)) in &self.scalars {
            if !allowed.contains(&k.as_str()) {
                return Err(parse_err(*n, format!("unknown key `{k}`")));
            }
        }
        for (name, sec) in &self.sections {
            if !sections.contains(&name.as_str()) {
                return Err(parse_err(sec.line, format!("unknown section [{name}]")));
            }
        }
        Ok(())
    }
}

fn parse_sequence_lines(section: &Section, vocab: &Vocabulary, length: usize) -> Result<Vec<(Sequence, f64)>> {
    section
        .lines
        .iter()
        .map(|(n, line)| {
            let mut parts = line.split_whitespace();
            let (Some(s), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(*n, "expected `SEQUENCE<TAB>reward`"));
            };
            let seq = vocab.parse(s).map_err(|e| parse_err(*n, e.to_string()))?;
            if seq.len() != length {
                return Err(parse_err(*n, format!("sequence length {} != {length}", seq.len())));
            }
            let reward = r.parse::<f64>().map_err(|e| parse_err(*n, format!("`{r}`: {e}")))?;
            Ok((seq, reward))
        })
        .collect()
}

fn parse_sizes(doc: &Document, key: &str) -> Result<Vec<usize>> {
    let (n, v) = doc.raw(key)?;
    v.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| parse_err(n, format!("`{key}`: {e}"))))
        .collect()
}

const COMMON_KEYS: [&str; 8] = ["format", "id", "kind", "vocabulary", "length", "rounds", "batch_size", "seed"];

pub fn parse_problem(text: &str) -> Result<OracleInstance> {
    let doc = Document::parse(text)?;
    let version: u32 = doc.get("format")?;
    if version != FORMAT_VERSION {
        let (n, _) = doc.raw("format")?;
        return Err(parse_err(n, format!("unsupported format version {version}")));
    }
    let id: String = doc.get("id")?;
    let kind: OracleKind = doc.get("kind")?;
    let (vn, vtext) = doc.raw("vocabulary")?;
    let vocab = Vocabulary::new(vtext.chars()).map_err(|e| parse_err(vn, e.to_string()))?;
    let length: usize = doc.get("length")?;
    let rounds: usize = doc.get("rounds")?;
    let batch_size: usize = doc.get("batch_size")?;
    let seed: u64 = doc.get("seed")?;
    let v = vocab.len();
    let keys = |extra: &[&'static str]| -> Vec<&'static str> { COMMON_KEYS.iter().chain(extra).copied().collect() };

    let oracle = match kind {
        OracleKind::Ising => {
            doc.check_keys(&keys(&["beta", "reference"]), &["substitution", "coupling", "contacts", "init"])?;
            let (rn, rtext) = doc.raw("reference")?;
            let reference = vocab.parse(rtext).map_err(|e| parse_err(rn, e.to_string()))?;
            let contacts_sec = doc.section("contacts")?;
            let contacts = contacts_sec
                .lines
                .iter()
                .map(|(n, line)| {
                    let nums: Vec<usize> = line
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|e| parse_err(*n, format!("`{t}`: {e}"))))
                        .collect::<Result<_>>()?;
                    match nums[..] {
                        [a, b] => Ok((a, b)),
                        _ => Err(parse_err(*n, "expected `i j`")),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Oracle::Ising(IsingOracle::new(
                reference,
                doc.matrix("substitution", v, v)?,
                doc.matrix("coupling", v, v)?,
                &contacts,
                doc.get("beta")?,
            )?)
        }
        OracleKind::Hmm => {
            doc.check_keys(&keys(&["match_states"]), &["match_emissions", "insert_emissions", "transitions", "init"])?;
            let m: usize = doc.get("match_states")?;
            let trans = doc
                .matrix("transitions", m + 1, 9)?
                .into_iter()
                .map(|r| {
                    let mut t: Transition = [[0.0; 3]; 3];
                    for (i, p) in r.into_iter().enumerate() {
                        t[i / 3][i % 3] = p;
                    }
                    t
                })
                .collect();
            Oracle::Hmm(ProfileHmm::new(
                doc.matrix("match_emissions", m, v)?,
                doc.matrix("insert_emissions", m + 1, v)?,
                trans,
            )?)
        }
        OracleKind::RandomMlp => {
            doc.check_keys(&keys(&["conv", "dense", "weight_seed"]), &["init"])?;
            let arch = Architecture::Mlp {
                conv: doc.get("conv")?,
                dense: parse_sizes(&doc, "dense")?,
            };
            Oracle::RandomNet(RandomNetOracle::new(arch, v, length, doc.get("weight_seed")?)?)
        }
        OracleKind::RandomRnn => {
            doc.check_keys(&keys(&["lstm", "weight_seed"]), &["init"])?;
            let arch = Architecture::Rnn {
                lstm: parse_sizes(&doc, "lstm")?,
            };
            Oracle::RandomNet(RandomNetOracle::new(arch, v, length, doc.get("weight_seed")?)?)
        }
        OracleKind::Lookup => {
            doc.check_keys(&keys(&[]), &["table", "init"])?;
            let sec = doc.section("table")?;
            let space = crate::seq::SearchSpace::new(v, length);
            let rows = parse_sequence_lines(sec, &vocab, length)?;
            let mut table = vec![f64::NAN; rows.len()];
            let mut seen = HashSet::new();
            for ((s, r), (n, _)) in rows.into_iter().zip(&sec.lines) {
                let idx = s.to_index(v);
                if idx >= table.len() || !seen.insert(idx) {
                    return Err(parse_err(*n, "duplicate or out-of-range table row"));
                }
                table[idx] = r;
            }
            Oracle::Lookup(LookupOracle::new(space, table)?)
        }
    };
    let init = match doc.sections.get("init") {
        Some(sec) => parse_sequence_lines(sec, &vocab, length)?,
        None => Vec::new(),
    };
    OracleInstance::new(id, vocab, length, rounds, batch_size, seed, init, oracle)
}

fn write_matrix(out: &mut String, name: &str, rows: &[Vec<f64>]) {
    let _ = writeln!(out, "\n[{name}]");
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Serialises an instance. `comments` are emitted as leading `#` lines.
pub fn write_problem(inst: &OracleInstance, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "format = {FORMAT_VERSION}");
    let _ = writeln!(out, "id = {}", inst.id);
    let _ = writeln!(out, "kind = {}", inst.kind());
    let _ = writeln!(out, "vocabulary = {}", inst.vocabulary.as_string());
    let _ = writeln!(out, "length = {}", inst.length);
    let _ = writeln!(out, "rounds = {}", inst.rounds);
    let _ = writeln!(out, "batch_size = {}", inst.batch_size);
    let _ = writeln!(out, "seed = {}", inst.seed);
    let vocab = &inst.vocabulary;
    match &inst.oracle {
        Oracle::Ising(o) => {
            let _ = writeln!(out, "beta = {}", o.beta());
            let _ = writeln!(out, "reference = {}", vocab.render(o.reference()));
            write_matrix(&mut out, "substitution", o.substitution());
            write_matrix(&mut out, "coupling", o.coupling());
            out.push_str("\n[contacts]\n");
            for (i, j) in o.contacts() {
                let _ = writeln!(out, "{i} {j}");
            }
        }
        Oracle::Hmm(h) => {
            let _ = writeln!(out, "match_states = {}", h.match_states());
            write_matrix(&mut out, "match_emissions", h.match_emissions());
            write_matrix(&mut out, "insert_emissions", h.insert_emissions());
            let rows: Vec<Vec<f64>> = h.transitions().iter().map(|t| t.iter().flatten().copied().collect()).collect();
            write_matrix(&mut out, "transitions", &rows);
        }
        Oracle::RandomNet(n) => {
            match n.architecture() {
                Architecture::Mlp { conv, dense } => {
                    let _ = writeln!(out, "conv = {conv}");
                    let _ = writeln!(out, "dense = {}", join_sizes(dense));
                }
                Architecture::Rnn { lstm } => {
                    let _ = writeln!(out, "lstm = {}", join_sizes(lstm));
                }
            }
            let _ = writeln!(out, "weight_seed = {}", n.weight_seed());
        }
        Oracle::Lookup(t) => {
            out.push_str("\n[table]\n");
            for (s, r) in t.entries() {
                let _ = writeln!(out, "{}\t{r}", vocab.render(&s));
            }
        }
    }
    if !inst.init_dataset.is_empty() {
        out.push_str("\n[init]\n");
        for (s, r) in &inst.init_dataset {
            let _ = writeln!(out, "{}\t{r}", vocab.render(s));
        }
    }
    out
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<OracleInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_problem(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn save_problem(path: impl AsRef<Path>, inst: &OracleInstance, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_problem(inst, comments)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::hmm::HmmParams;
    use crate::oracles::ising::{toy_coupling, toy_substitution};
    use crate::rng;
    use crate::seq::SearchSpace;

    fn round_trip(inst: &OracleInstance) -> OracleInstance {
        let text = write_problem(inst, &["test".into()]);
        let back = parse_problem(&text).unwrap();
        assert_eq!(write_problem(&back, &["test".into()]), text);
        back
    }

    fn same_scores(a: &OracleInstance, b: &OracleInstance) {
        let mut r = rng::from_seed(2);
        for _ in 0..20 {
            let x = Sequence::random(a.space(), &mut r);
            assert_eq!(a.oracle.score(&x).to_bits(), b.oracle.score(&x).to_bits());
        }
    }

    #[test]
    fn ising_round_trip() {
        let v = Vocabulary::letters(4).unwrap();
        let o = IsingOracle::new(Sequence(vec![0, 1, 2, 3, 0]), toy_substitution(4), toy_coupling(4), &[(0, 3), (1, 4)], 0.3)
            .unwrap();
        let init = vec![(Sequence(vec![1, 1, 1, 1, 1]), o.score(&Sequence(vec![1, 1, 1, 1, 1])))];
        let inst = OracleInstance::new("ising-t", v, 5, 4, 3, 9, init, Oracle::Ising(o)).unwrap();
        let back = round_trip(&inst);
        same_scores(&inst, &back);
        assert_eq!(back.init_dataset, inst.init_dataset);
    }

    #[test]
    fn hmm_round_trip() {
        let mut r = rng::from_seed(1);
        let p = HmmParams {
            match_states: 4,
            vocab_size: 3,
            match_concentration: 0.5,
            insert_concentration: 1.0,
            transition_concentration: 10.0,
            indel_rate: 0.1,
        };
        let h = ProfileHmm::random(&p, &mut r).unwrap();
        let inst = OracleInstance::new("hmm-t", Vocabulary::letters(3).unwrap(), 4, 2, 2, 1, vec![], Oracle::Hmm(h)).unwrap();
        same_scores(&inst, &round_trip(&inst));
    }

    #[test]
    fn net_and_lookup_round_trip() {
        let v = Vocabulary::dna();
        let mlp = RandomNetOracle::new(Architecture::Mlp { conv: true, dense: vec![128, 256] }, 4, 6, 5).unwrap();
        let inst = OracleInstance::new("mlp", v.clone(), 6, 2, 2, 1, vec![], Oracle::RandomNet(mlp)).unwrap();
        same_scores(&inst, &round_trip(&inst));
        let rnn = RandomNetOracle::new(Architecture::Rnn { lstm: vec![128] }, 4, 6, 5).unwrap();
        let inst = OracleInstance::new("rnn", v.clone(), 6, 2, 2, 1, vec![], Oracle::RandomNet(rnn)).unwrap();
        same_scores(&inst, &round_trip(&inst));
        let space = SearchSpace::new(4, 3);
        let table: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 / 7.0).collect();
        let lk = LookupOracle::new(space, table).unwrap();
        let inst = OracleInstance::new("lk", v, 3, 2, 2, 1, vec![], Oracle::Lookup(lk)).unwrap();
        let back = round_trip(&inst);
        if let (Oracle::Lookup(a), Oracle::Lookup(b)) = (&inst.oracle, &back.oracle) {
            assert_eq!(a.table(), b.table());
        }
    }

    #[test]
    fn reports_line_numbers() {
        let text = "format = 1\nid = x\nkind = lookup\nvocabulary = AB\nlength = 1\nrounds = 1\nbatch_size = 1\nseed = 0\n\n[table]\nA\t0\nC\t1\n";
        match parse_problem(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 12),
            other => panic!("unexpected {other:?}"),
        }
        let text = "format = 2\n";
        assert!(matches!(parse_problem(text), Err(Error::Parse { line: 1, .. })));
        let text = "format = 1\nid = x\nkind = lookup\nbogus = 1\n";
        assert!(parse_problem(text).is_err());
    }
}
