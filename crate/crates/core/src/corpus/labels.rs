//! FairFace-style demographic labels.
//!
//! Category orders are canonical and shared by every report: gender is
//! (Male, Female), race follows the column order of the published averaged
//! results table, and age buckets run Young, Adult, Old.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::embeddings::Manifest;
use crate::error::{Error, Result, ResultExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Male" => Ok(Gender::Male),
            "Female" => Ok(Gender::Female),
            other => Err(Error::UnknownGender(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    #[serde(rename = "East Asian")]
    EastAsian,
    Indian,
    Black,
    White,
    #[serde(rename = "Middle Eastern")]
    MiddleEastern,
    #[serde(rename = "Latino_Hispanic")]
    LatinoHispanic,
    #[serde(rename = "Southeast Asian")]
    SoutheastAsian,
}

impl Race {
    pub const ALL: [Race; 7] = [
        Race::EastAsian,
        Race::Indian,
        Race::Black,
        Race::White,
        Race::MiddleEastern,
        Race::LatinoHispanic,
        Race::SoutheastAsian,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Name as written in FairFace label files.
    pub fn name(self) -> &'static str {
        match self {
            Race::EastAsian => "East Asian",
            Race::Indian => "Indian",
            Race::Black => "Black",
            Race::White => "White",
            Race::MiddleEastern => "Middle Eastern",
            Race::LatinoHispanic => "Latino_Hispanic",
            Race::SoutheastAsian => "Southeast Asian",
        }
    }
}

impl FromStr for Race {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "Latino" | "Latino Hispanic" => return Ok(Race::LatinoHispanic),
            _ => {}
        }
        Race::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::UnknownRace(s.to_string()))
    }
}

/// The nine raw FairFace age bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    A0to2,
    A3to9,
    A10to19,
    A20to29,
    A30to39,
    A40to49,
    A50to59,
    A60to69,
    A70Plus,
}

impl AgeBand {
    pub const ALL: [AgeBand; 9] = [
        AgeBand::A0to2,
        AgeBand::A3to9,
        AgeBand::A10to19,
        AgeBand::A20to29,
        AgeBand::A30to39,
        AgeBand::A40to49,
        AgeBand::A50to59,
        AgeBand::A60to69,
        AgeBand::A70Plus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgeBand::A0to2 => "0-2",
            AgeBand::A3to9 => "3-9",
            AgeBand::A10to19 => "10-19",
            AgeBand::A20to29 => "20-29",
            AgeBand::A30to39 => "30-39",
            AgeBand::A40to49 => "40-49",
            AgeBand::A50to59 => "50-59",
            AgeBand::A60to69 => "60-69",
            AgeBand::A70Plus => "70+",
        }
    }

    pub fn bucket(self) -> AgeBucket {
        consolidate_age(self)
    }
}

impl FromStr for AgeBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        // The FairFace CSV export spells the top band "more than 70".
        if s == "more than 70" {
            return Ok(AgeBand::A70Plus);
        }
        AgeBand::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownAgeBand(s.to_string()))
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBucket {
    Young,
    Adult,
    Old,
}

impl AgeBucket {
    pub const ALL: [AgeBucket; 3] = [AgeBucket::Young, AgeBucket::Adult, AgeBucket::Old];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AgeBucket::Young => "Young",
            AgeBucket::Adult => "Adult",
            AgeBucket::Old => "Old",
        }
    }

    /// A representative raw band, used when synthesizing labels.
    pub fn representative_band(self) -> AgeBand {
        match self {
            AgeBucket::Young => AgeBand::A10to19,
            AgeBucket::Adult => AgeBand::A30to39,
            AgeBucket::Old => AgeBand::A60to69,
        }
    }
}

impl FromStr for AgeBucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgeBucket::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownAgeBand(s.to_string()))
    }
}

/// Young is 0-19, Adult is 20-49, Old is 50 and over.
pub fn consolidate_age(raw: AgeBand) -> AgeBucket {
    match raw {
        AgeBand::A0to2 | AgeBand::A3to9 | AgeBand::A10to19 => AgeBucket::Young,
        AgeBand::A20to29 | AgeBand::A30to39 | AgeBand::A40to49 => AgeBucket::Adult,
        AgeBand::A50to59 | AgeBand::A60to69 | AgeBand::A70Plus => AgeBucket::Old,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    pub gender: Gender,
    pub race: Race,
    pub age: AgeBand,
}

impl Label {
    pub fn bucket(&self) -> AgeBucket {
        self.age.bucket()
    }

    /// Index of the (gender, race, age bucket) cell, gender-major.
    pub fn joint_index(&self) -> usize {
        joint_index(self.gender, self.race, self.bucket())
    }
}

pub const JOINT_CELLS: usize = 2 * 7 * 3;

pub fn joint_index(gender: Gender, race: Race, age: AgeBucket) -> usize {
    (gender.index() * 7 + race.index()) * 3 + age.index()
}

pub fn joint_cell(index: usize) -> (Gender, Race, AgeBucket) {
    assert!(index < JOINT_CELLS, "joint cell index {index} out of range");
    let age = AgeBucket::ALL[index % 3];
    let race = Race::ALL[(index / 3) % 7];
    let gender = Gender::ALL[index / 21];
    (gender, race, age)
}

/// Per-image labels keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    rows: HashMap<String, Label>,
    /// File order, kept so tables can be written back deterministically.
    order: Vec<String>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, label: Label) -> Result<()> {
        let id = id.into();
        if self.rows.contains_key(&id) {
            return Err(Error::DuplicateRow(id));
        }
        self.order.push(id.clone());
        self.rows.insert(id, label);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Label> {
        self.rows.get(id)
    }

    pub fn label(&self, id: &str) -> Result<&Label> {
        self.get(id).ok_or_else(|| Error::MissingLabel(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Label)> {
        self.order.iter().map(|id| (id.as_str(), &self.rows[id]))
    }

    /// Checks that every id in `manifest` has a label row.
    pub fn check_covers(&self, manifest: &Manifest) -> Result<()> {
        match manifest.ids.iter().find(|id| !self.rows.contains_key(id.as_str())) {
            Some(id) => Err(Error::MissingLabel(id.clone())),
            None => Ok(()),
        }
    }

    /// Parses a FairFace-style CSV (`file,age,gender,race`, extra columns ignored).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column = |name: &'static str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or(Error::MissingColumn(name))
        };
        let (file, age, gender, race) = (column("file")?, column("age")?, column("gender")?, column("race")?);

        let mut table = LabelTable::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| record.get(i).unwrap_or("");
            let parsed = (|| {
                let label = Label {
                    gender: field(gender).parse()?,
                    race: field(race).parse()?,
                    age: field(age).parse()?,
                };
                table.insert(field(file), label)
            })();
            parsed.map_err(|e| Error::AtLine {
                path: "<labels>".into(),
                line,
                source: Box::new(e),
            })?;
        }
        Ok(table)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).at(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::AtLine { line, source, .. } => Error::AtLine {
                path: path.to_path_buf(),
                line,
                source,
            },
            other => other.at(path),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        wtr.write_record(["file", "age", "gender", "race"]).expect("in-memory write");
        for (id, label) in self.iter() {
            wtr.write_record([id, label.age.name(), label.gender.name(), label.race.name()])
                .expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Loads labels and checks that every id in `manifest` is covered.
pub fn load_labels(path: &Path, manifest: &Manifest) -> Result<LabelTable> {
    let table = LabelTable::read_csv(path)?;
    table.check_covers(manifest).at(path)?;
    Ok(table)
}
