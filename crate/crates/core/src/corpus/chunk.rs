use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::preprocess::TokenizedDoc;
use crate::error::{Error, Result};

/// A calendar duration: whole days or whole months. Written `90d`, `2w`,
/// `3m` or `1y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ChunkLength {
    Days(u32),
    Months(u32),
}

impl ChunkLength {
    pub fn is_zero(self) -> bool {
        matches!(self, ChunkLength::Days(0) | ChunkLength::Months(0))
    }

    fn add_to(self, date: NaiveDate, times: u32) -> NaiveDate {
        match self {
            ChunkLength::Days(d) => date + chrono::Duration::days(i64::from(d) * i64::from(times)),
            ChunkLength::Months(m) => date.checked_add_months(Months::new(m * times)).expect("date overflow"),
        }
    }

    fn sub_from(self, date: NaiveDate) -> NaiveDate {
        match self {
            ChunkLength::Days(d) => date - chrono::Duration::days(i64::from(d)),
            ChunkLength::Months(m) => date.checked_sub_months(Months::new(m)).expect("date overflow"),
        }
    }
}

impl FromStr for ChunkLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("bad duration `{s}` (expected e.g. 90d, 2w, 3m, 1y)"));
        let (num, unit) = s.split_at(s.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?);
        let n: u32 = num.parse().map_err(|_| bad())?;
        match unit {
            "d" => Ok(ChunkLength::Days(n)),
            "w" => Ok(ChunkLength::Days(n * 7)),
            "m" => Ok(ChunkLength::Months(n)),
            "y" => Ok(ChunkLength::Months(n * 12)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for ChunkLength {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for ChunkLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkLength::Days(d) => write!(f, "{d}d"),
            ChunkLength::Months(m) => write!(f, "{m}m"),
        }
    }
}

impl From<ChunkLength> for String {
    fn from(c: ChunkLength) -> Self {
        c.to_string()
    }
}

/// Half-open date interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl TimeInterval {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub interval: TimeInterval,
    /// Indices into [`ChunkedCorpus::docs`], ascending.
    pub docs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedCorpus {
    pub docs: Vec<TokenizedDoc>,
    pub chunks: Vec<Chunk>,
    pub chunk_length: ChunkLength,
    pub margin: ChunkLength,
    /// The base (unsmoothed) chunk of each document.
    pub base_chunk: Vec<usize>,
}

impl ChunkedCorpus {
    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunk_docs(&self, t: usize) -> impl Iterator<Item = &TokenizedDoc> {
        self.chunks[t].docs.iter().map(move |&i| &self.docs[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.chunks.iter().map(|c| c.docs.len()).collect()
    }

    pub fn span(&self) -> TimeInterval {
        TimeInterval {
            start: self.chunks[0].interval.start,
            end: self.chunks[self.chunks.len() - 1].interval.end,
        }
    }
}

/// Uniform partition of the corpus span; empty chunks are kept.
pub fn chunk_by_time(docs: Vec<TokenizedDoc>, chunk_length: ChunkLength) -> Result<ChunkedCorpus> {
    chunk_by_time_with_margin(docs, chunk_length, ChunkLength::Days(0))
}

/// As [`chunk_by_time`], but each chunk additionally takes documents dated
/// within `margin` of its boundaries. The base partition is unchanged.
pub fn chunk_by_time_with_margin(
    docs: Vec<TokenizedDoc>,
    chunk_length: ChunkLength,
    margin: ChunkLength,
) -> Result<ChunkedCorpus> {
    if chunk_length.is_zero() {
        return Err(Error::Config("chunk length must be positive".into()));
    }
    let first = docs
        .iter()
        .map(|d| d.date)
        .min()
        .ok_or_else(|| Error::Data("cannot chunk an empty corpus".into()))?;

    let origin = match chunk_length {
        ChunkLength::Days(_) => first,
        ChunkLength::Months(_) => first.with_day(1).expect("day 1 exists"),
    };
    let base_chunk: Vec<usize> = docs
        .iter()
        .map(|d| match chunk_length {
            ChunkLength::Days(n) => ((d.date - origin).num_days() / i64::from(n)) as usize,
            ChunkLength::Months(n) => (month_index(d.date) - month_index(origin)) as usize / n as usize,
        })
        .collect();
    let n_chunks = base_chunk.iter().max().map_or(1, |m| m + 1);

    let mut chunks: Vec<Chunk> = (0..n_chunks)
        .map(|t| Chunk {
            index: t,
            interval: TimeInterval {
                start: chunk_length.add_to(origin, t as u32),
                end: chunk_length.add_to(origin, t as u32 + 1),
            },
            docs: Vec::new(),
        })
        .collect();

    if margin.is_zero() {
        for (i, &t) in base_chunk.iter().enumerate() {
            chunks[t].docs.push(i);
        }
    } else {
        for chunk in &mut chunks {
            let lo = margin.sub_from(chunk.interval.start);
            let hi = margin.add_to(chunk.interval.end, 1);
            chunk.docs = docs
                .iter()
                .enumerate()
                .filter(|(_, d)| lo <= d.date && d.date < hi)
                .map(|(i, _)| i)
                .collect();
        }
    }

    Ok(ChunkedCorpus {
        docs,
        chunks,
        chunk_length,
        margin,
        base_chunk,
    })
}

fn month_index(d: NaiveDate) -> i64 {
    i64::from(d.year()) * 12 + i64::from(d.month0())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: usize, date: NaiveDate) -> TokenizedDoc {
        TokenizedDoc {
            id: id.to_string(),
            authors: vec!["a".into()],
            date,
            tokens: vec![0],
        }
    }

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn one_doc_per_month() {
        let docs = vec![
            doc(0, ymd(2020, 1, 5)),
            doc(1, ymd(2020, 2, 5)),
            doc(2, ymd(2020, 3, 5)),
        ];
        let c = chunk_by_time(docs, ChunkLength::Months(1)).unwrap();
        assert_eq!(c.sizes(), vec![1, 1, 1]);
        assert_eq!(c.chunks[1].interval.start, ymd(2020, 2, 1));
    }

    #[test]
    fn degenerate_span_is_one_chunk() {
        let docs = (0..4).map(|i| doc(i, ymd(2021, 6, 1))).collect();
        let c = chunk_by_time(docs, ChunkLength::Days(30)).unwrap();
        assert_eq!(c.num_chunks(), 1);
        assert_eq!(c.sizes(), vec![4]);
    }

    #[test]
    fn empty_chunks_are_retained() {
        let docs = vec![doc(0, ymd(2020, 1, 1)), doc(1, ymd(2020, 1, 25))];
        let c = chunk_by_time(docs, ChunkLength::Days(7)).unwrap();
        assert_eq!(c.sizes(), vec![1, 0, 0, 1]);
    }

    #[test]
    fn margin_adds_neighbours_but_keeps_partition() {
        let docs = vec![
            doc(0, ymd(2020, 1, 28)),
            doc(1, ymd(2020, 2, 2)),
            doc(2, ymd(2020, 2, 20)),
        ];
        let c = chunk_by_time_with_margin(docs, ChunkLength::Months(1), ChunkLength::Days(5)).unwrap();
        assert_eq!(c.base_chunk, vec![0, 1, 1]);
        assert_eq!(c.chunks[0].docs, vec![0, 1]);
        assert_eq!(c.chunks[1].docs, vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        assert!(chunk_by_time(vec![], ChunkLength::Months(1)).is_err());
        assert!(chunk_by_time(vec![doc(0, ymd(2020, 1, 1))], ChunkLength::Days(0)).is_err());
    }

    #[test]
    fn duration_parsing() {
        assert_eq!("3m".parse::<ChunkLength>().unwrap(), ChunkLength::Months(3));
        assert_eq!("1y".parse::<ChunkLength>().unwrap(), ChunkLength::Months(12));
        assert_eq!("2w".parse::<ChunkLength>().unwrap(), ChunkLength::Days(14));
        assert!("3x".parse::<ChunkLength>().is_err());
        assert!("m".parse::<ChunkLength>().is_err());
    }
}
