//! Header-prefixed, comma-separated, newline-terminated files without any
//! quoting. Files are cut into newline-aligned byte ranges and each range is
//! parsed independently into a columnar partition.

use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};

use memchr::memchr;
use serde::{Deserialize, Serialize};

use super::{CatalogError, TableSchema};

pub const FIELD_SEPARATOR: u8 = b',';
pub const RECORD_TERMINATOR: u8 = b'\n';

/// Half-open byte range `[offset, offset + length)` of a source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ByteRange {
    pub offset: u64,
    pub length: u64,
}

impl ByteRange {
    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

/// One column of text values stored back to back with an offsets array.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextColumn {
    data: String,
    offsets: Vec<usize>,
}

impl TextColumn {
    pub fn with_capacity(rows: usize, bytes: usize) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        offsets.push(0);
        Self {
            data: String::with_capacity(bytes),
            offsets,
        }
    }

    pub fn push(&mut self, value: &str) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.data.push_str(value);
        self.offsets.push(self.data.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> &str {
        &self.data[self.offsets[row]..self.offsets[row + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Approximate resident size in bytes.
    pub fn heap_bytes(&self) -> usize {
        self.data.capacity() + self.offsets.capacity() * std::mem::size_of::<usize>()
    }
}

impl<S: AsRef<str>> FromIterator<S> for TextColumn {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut col = TextColumn::with_capacity(0, 0);
        for v in iter {
            col.push(v.as_ref());
        }
        col
    }
}

/// Immutable column arrays for one newline-aligned slice of a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnarPartition {
    partition_id: u32,
    row_count: usize,
    columns: Vec<TextColumn>,
    source_range: ByteRange,
}

impl ColumnarPartition {
    pub fn new(
        partition_id: u32,
        columns: Vec<TextColumn>,
        source_range: ByteRange,
    ) -> Result<Self, CatalogError> {
        let row_count = columns.first().map_or(0, TextColumn::len);
        if columns.iter().any(|c| c.len() != row_count) {
            return Err(CatalogError::InvalidSchema(format!(
                "partition {partition_id}: column arrays differ in length"
            )));
        }
        Ok(Self {
            partition_id,
            row_count,
            columns,
            source_range,
        })
    }

    pub fn partition_id(&self) -> u32 {
        self.partition_id
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, ordinal: usize) -> &TextColumn {
        &self.columns[ordinal]
    }

    pub fn columns(&self) -> &[TextColumn] {
        &self.columns
    }

    pub fn source_range(&self) -> ByteRange {
        self.source_range
    }

    pub fn value(&self, row: usize, ordinal: usize) -> &str {
        self.columns[ordinal].get(row)
    }

    pub fn heap_bytes(&self) -> usize {
        self.columns.iter().map(TextColumn::heap_bytes).sum()
    }

    /// Writes the rows back out in the on-disk record format.
    pub fn write_csv(&self, out: &mut String) {
        for row in 0..self.row_count {
            for (i, col) in self.columns.iter().enumerate() {
                if i > 0 {
                    out.push(FIELD_SEPARATOR as char);
                }
                out.push_str(col.get(row));
            }
            out.push(RECORD_TERMINATOR as char);
        }
    }
}

/// Cuts the data region of a header-prefixed file into consecutive ranges
/// of roughly `target_partition_bytes`, each ending just after a newline
/// (the last range may end at EOF without one).
pub fn split_csv<R: Read + Seek>(
    file_size: u64,
    reader: R,
    target_partition_bytes: u64,
) -> Result<Vec<ByteRange>, CatalogError> {
    if target_partition_bytes == 0 {
        return Err(CatalogError::InvalidConfig(
            "target partition size must be at least one byte".into(),
        ));
    }
    let mut reader = BufReader::with_capacity(64 * 1024, reader);
    let mut ranges = Vec::new();
    if file_size == 0 {
        return Ok(ranges);
    }
    reader.seek(SeekFrom::Start(0))?;
    let Some(header_end) = next_newline(&mut reader, 0)? else {
        // header only, no terminator
        return Ok(ranges);
    };
    let mut start = header_end + 1;
    while start < file_size {
        let tentative = start.saturating_add(target_partition_bytes);
        if tentative >= file_size {
            ranges.push(ByteRange {
                offset: start,
                length: file_size - start,
            });
            break;
        }
        // the byte at tentative - 1 may itself be the newline
        reader.seek(SeekFrom::Start(tentative - 1))?;
        let end = match next_newline(&mut reader, tentative - 1)? {
            Some(nl) => (nl + 1).min(file_size),
            None => file_size,
        };
        ranges.push(ByteRange {
            offset: start,
            length: end - start,
        });
        start = end;
    }
    Ok(ranges)
}

/// Absolute position of the next `\n` at or after `pos`, where the reader is
/// already positioned at `pos`.
fn next_newline<R: BufRead>(reader: &mut R, mut pos: u64) -> Result<Option<u64>, CatalogError> {
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return Ok(None);
        }
        if let Some(i) = memchr(RECORD_TERMINATOR, buf) {
            return Ok(Some(pos + i as u64));
        }
        let n = buf.len();
        reader.consume(n);
        pos += n as u64;
    }
}

/// Parses one newline-aligned range into column arrays.
pub fn parse_csv_range(
    bytes: &[u8],
    schema: &TableSchema,
    partition_id: u32,
    source_range: ByteRange,
) -> Result<ColumnarPartition, CatalogError> {
    parse_csv_range_limited(bytes, schema, partition_id, source_range, None)
}

/// Like [`parse_csv_range`] but stops after `max_rows` records.
pub fn parse_csv_range_limited(
    bytes: &[u8],
    schema: &TableSchema,
    partition_id: u32,
    source_range: ByteRange,
    max_rows: Option<usize>,
) -> Result<ColumnarPartition, CatalogError> {
    let width = schema.width();
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == RECORD_TERMINATOR)
            .count()
            + 1;
        CatalogError::Ingest {
            table: schema.name.clone(),
            partition_id,
            line,
            reason: "invalid UTF-8".into(),
        }
    })?;
    let approx_rows = bytes.len() / (width * 8).max(1);
    let per_column = bytes.len() / width.max(1);
    let mut columns: Vec<TextColumn> = (0..width)
        .map(|_| TextColumn::with_capacity(approx_rows, per_column))
        .collect();

    let budget = max_rows.unwrap_or(usize::MAX);
    let mut rows = 0usize;
    // split_terminator drops the empty tail after a final newline
    for (index, line) in text.split_terminator(RECORD_TERMINATOR as char).enumerate() {
        if rows >= budget {
            break;
        }
        let mut fields = 0usize;
        for field in line.split(FIELD_SEPARATOR as char) {
            if fields < width {
                columns[fields].push(field);
            }
            fields += 1;
        }
        if fields != width {
            return Err(CatalogError::Ingest {
                table: schema.name.clone(),
                partition_id,
                line: index + 1,
                reason: format!("expected {width} fields, found {fields}"),
            });
        }
        rows += 1;
    }
    for col in &mut columns {
        col.data.shrink_to_fit();
        col.offsets.shrink_to_fit();
    }
    ColumnarPartition::new(partition_id, columns, source_range)
}
