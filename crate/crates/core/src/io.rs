//! File formats.
//!
//! - Performance / game CSV: header `players,value`, one row per observed
//!   coalition, members `;`-joined (empty field for `∅`).
//! - Matchup CSV: header `team_a,team_b,a_won` with `a_won` in `{0, 1}`.
//! - Model JSON: `{"players": [...], "order": k, "weights": {"a;b": w}, "meta": {...}}`.
//!
//! Player universes of CSV files are built from ids in order of first
//! appearance. Floats are written in shortest round-trip form, so every
//! value reads back bit-exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::coalition::{split_ids, Coalition, PlayerUniverse, DENSE_LIMIT, MAX_PLAYERS};
use crate::error::{guard, Error, Result};
use crate::estimation::{Matchup, MatchupDataset, PerformanceDataset};
use crate::game::{CgaModel, CharacteristicFunction, Game};

const PERFORMANCE_HEADER: [&str; 2] = ["players", "value"];
const MATCHUP_HEADER: [&str; 3] = ["team_a", "team_b", "a_won"];

/// Player registry that grows in order of first appearance.
#[derive(Default)]
struct UniverseBuilder {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl UniverseBuilder {
    fn coalition(&mut self, field: &str, line: u64) -> Result<Coalition> {
        let mut c = Coalition::EMPTY;
        for id in split_ids(field) {
            let i = match self.index.get(id) {
                Some(&i) => i,
                None => {
                    if self.ids.len() == MAX_PLAYERS {
                        return Err(Error::capacity("player count", MAX_PLAYERS as u64 + 1, MAX_PLAYERS as u64));
                    }
                    self.index.insert(id.to_owned(), self.ids.len());
                    self.ids.push(id.to_owned());
                    self.ids.len() - 1
                }
            };
            if c.contains(i) {
                return Err(Error::format(Some(line), format!("player {id:?} listed twice")));
            }
            c = c.with(i);
        }
        Ok(c)
    }

    fn finish(self) -> Result<PlayerUniverse> {
        PlayerUniverse::new(self.ids)
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_error(e, Some(1)))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            Some(1),
            format!("expected header {:?}, found {:?}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn csv_error(e: csv::Error, fallback_line: Option<u64>) -> Error {
    let line = e.position().map(|p| p.line()).or(fallback_line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::format(line, format!("{kind:?}")),
    }
}

fn parse_value(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::format(Some(line), format!("value {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::format(Some(line), format!("value {field:?} is not finite")));
    }
    Ok(v)
}

/// A performance CSV together with ingestion diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceCsv {
    pub dataset: PerformanceDataset,
    /// Set when a row gives the empty coalition a nonzero value. Models
    /// evaluate `∅` to zero, so such files are flagged rather than shifted.
    pub nonzero_empty: bool,
}

pub fn read_performance_csv<R: Read>(reader: R) -> Result<PerformanceCsv> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &PERFORMANCE_HEADER)?;
    let mut players = UniverseBuilder::default();
    let mut rows = Vec::new();
    let mut nonzero_empty = false;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| csv_error(e, None))? {
        let line = record.position().map_or(0, |p| p.line());
        let c = players.coalition(&record[0], line)?;
        let v = parse_value(&record[1], line)?;
        nonzero_empty |= c.is_empty() && v != 0.0;
        rows.push((c, v));
    }
    let universe = players
        .finish()
        .map_err(|e| match e {
            Error::Domain(msg) => Error::format(None, msg),
            other => other,
        })?;
    Ok(PerformanceCsv {
        dataset: PerformanceDataset::new(universe, rows)?,
        nonzero_empty,
    })
}

pub fn load_performance_csv(path: impl AsRef<Path>) -> Result<PerformanceCsv> {
    read_performance_csv(BufReader::new(File::open(path)?))
}

pub fn write_performance_csv<W: Write>(writer: W, data: &PerformanceDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PERFORMANCE_HEADER).map_err(|e| csv_error(e, None))?;
    for &(c, v) in data.rows() {
        w.write_record([data.universe().format(c), format_float(v)])
            .map_err(|e| csv_error(e, None))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_performance_csv(path: impl AsRef<Path>, data: &PerformanceDataset) -> Result<()> {
    write_performance_csv(BufWriter::new(File::create(path)?), data)
}

/// Every coalition of `g` in mask order.
pub fn game_to_dataset(g: &Game) -> PerformanceDataset {
    let rows = g.values().iter().enumerate().map(|(m, &v)| (Coalition::from_mask(m as u64), v)).collect();
    PerformanceDataset::new(g.universe().clone(), rows).expect("game rows belong to the game universe")
}

/// Dense game from a dataset listing each of the `2^n` coalitions exactly once.
pub fn dataset_to_game(data: &PerformanceDataset) -> Result<Game> {
    let n = data.universe().len();
    guard("dense game size n", n, DENSE_LIMIT)?;
    let mut values = vec![f64::NAN; 1 << n];
    for &(c, v) in data.rows() {
        let slot = &mut values[c.mask() as usize];
        if !slot.is_nan() {
            return Err(Error::domain(format!("coalition {{{}}} appears twice", data.universe().format(c))));
        }
        *slot = v;
    }
    if let Some(m) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::domain(format!(
            "game table is incomplete: coalition {{{}}} is missing",
            data.universe().format(Coalition::from_mask(m as u64))
        )));
    }
    Game::new(data.universe().clone(), values)
}

pub fn load_game_csv(path: impl AsRef<Path>) -> Result<Game> {
    dataset_to_game(&load_performance_csv(path)?.dataset)
}

pub fn save_game_csv(path: impl AsRef<Path>, g: &Game) -> Result<()> {
    save_performance_csv(path, &game_to_dataset(g))
}

pub fn read_matchup_csv<R: Read>(reader: R) -> Result<MatchupDataset> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &MATCHUP_HEADER)?;
    let mut players = UniverseBuilder::default();
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(|e| csv_error(e, None))? {
        let line = record.position().map_or(0, |p| p.line());
        let team_a = players.coalition(&record[0], line)?;
        let team_b = players.coalition(&record[1], line)?;
        if team_a.is_empty() || team_b.is_empty() {
            return Err(Error::format(Some(line), "teams must be non-empty"));
        }
        if !team_a.is_disjoint(team_b) {
            return Err(Error::format(Some(line), "teams overlap"));
        }
        let a_won = match &record[2] {
            "1" => true,
            "0" => false,
            other => return Err(Error::format(Some(line), format!("a_won must be 0 or 1, found {other:?}"))),
        };
        rows.push(Matchup { team_a, team_b, a_won });
    }
    MatchupDataset::new(players.finish()?, rows)
}

pub fn load_matchup_csv(path: impl AsRef<Path>) -> Result<MatchupDataset> {
    read_matchup_csv(BufReader::new(File::open(path)?))
}

pub fn write_matchup_csv<W: Write>(writer: W, data: &MatchupDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MATCHUP_HEADER).map_err(|e| csv_error(e, None))?;
    let u = data.universe();
    for m in data.rows() {
        w.write_record([u.format(m.team_a), u.format(m.team_b), (m.a_won as u8).to_string()])
            .map_err(|e| csv_error(e, None))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_matchup_csv(path: impl AsRef<Path>, data: &MatchupDataset) -> Result<()> {
    write_matchup_csv(BufWriter::new(File::create(path)?), data)
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    players: PlayerUniverse,
    order: usize,
    weights: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
}

/// A model with its optional fit metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: CgaModel,
    pub meta: Option<Value>,
}

pub fn model_to_json(model: &CgaModel, meta: Option<&Value>) -> Value {
    let u = model.universe();
    let weights = model.weights().iter().map(|&(s, w)| (u.format(s), Value::from(w))).collect();
    let doc = ModelJson {
        players: u.clone(),
        order: model.order(),
        weights,
        meta: meta.cloned(),
    };
    serde_json::to_value(doc).expect("model documents always serialize")
}

pub fn model_from_json(value: Value) -> Result<ModelFile> {
    let doc: ModelJson = serde_json::from_value(value).map_err(|e| Error::format(None, e.to_string()))?;
    let mut weights = Vec::with_capacity(doc.weights.len());
    for (key, w) in &doc.weights {
        let s = doc.players.parse(key).map_err(|e| Error::format(None, format!("weight key {key:?}: {e}")))?;
        let w = w
            .as_f64()
            .ok_or_else(|| Error::format(None, format!("weight for {key:?} is not a number")))?;
        weights.push((s, w));
    }
    let model = CgaModel::new(doc.players, doc.order, weights).map_err(|e| match e {
        Error::Domain(msg) => Error::format(None, msg),
        other => other,
    })?;
    Ok(ModelFile { model, meta: doc.meta })
}

pub fn read_model_json<R: Read>(reader: R) -> Result<ModelFile> {
    let value: Value = serde_json::from_reader(reader).map_err(|e| Error::format(Some(e.line() as u64), e.to_string()))?;
    model_from_json(value)
}

pub fn load_model_json(path: impl AsRef<Path>) -> Result<ModelFile> {
    read_model_json(BufReader::new(File::open(path)?))
}

pub fn write_model_json<W: Write>(mut writer: W, model: &CgaModel, meta: Option<&Value>) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, &model_to_json(model, meta)).map_err(std::io::Error::from)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

pub fn save_model_json(path: impl AsRef<Path>, model: &CgaModel, meta: Option<&Value>) -> Result<()> {
    write_model_json(BufWriter::new(File::create(path)?), model, meta)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
