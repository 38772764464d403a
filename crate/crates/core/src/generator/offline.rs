// Copyright (c) The Twins Forge Contributors
// SPDX-License-Identifier: Apache-2.0

//! One testcase per line as JSON, so shards can be cut with `split`/`sed`.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use super::GenError;
use crate::executor::TestCase;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineRecord {
    pub ordinal: u64,
    pub mode: String,
    #[serde(flatten)]
    pub testcase: TestCase,
}

pub fn write_offline<W: Write>(mut w: W, records: impl IntoIterator<Item = OfflineRecord>) -> Result<usize, GenError> {
    let mut n = 0;
    for rec in records {
        serde_json::to_writer(&mut w, &rec).map_err(|e| GenError::Offline(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| GenError::Offline(e.to_string()))?;
        n += 1;
    }
    w.flush().map_err(|e| GenError::Offline(e.to_string()))?;
    Ok(n)
}

/// Reads records lazily; blank lines are skipped, bad lines are errors
/// carrying their 1-based line number.
pub fn read_offline<R: BufRead>(r: R) -> impl Iterator<Item = Result<OfflineRecord, GenError>> {
    r.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(GenError::Offline(e.to_string()))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(serde_json::from_str(&l).map_err(|e| GenError::Offline(format!("line {}: {e}", i + 1)))),
    })
}
