//! Opcode extraction from `objdump -d` text listings.
//!
//! An instruction line looks like
//!
//! ```text
//!   401000:<TAB>55                   <TAB>push   %ebp
//! ```
//!
//! i.e. optional indentation, a hex address, `:` and a tab, the raw bytes as
//! space-separated hex pairs, another tab, then the mnemonic and operands.
//! Long instructions wrap their remaining bytes onto continuation lines that
//! carry an address and bytes but no mnemonic. Label lines
//! (`08049190 <main>:`), section headers, the file-format banner and blank
//! lines are not instructions and contribute nothing.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Mnemonics of one executable, in listing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeSequence {
    pub source_id: String,
    pub opcodes: Vec<String>,
}

impl OpcodeSequence {
    pub fn len(&self) -> usize {
        self.opcodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opcodes.is_empty()
    }
}

/// Marker objdump prints for undecodable bytes.
const BAD_MARKER: &str = "(bad)";

enum Line<'a> {
    Instruction(&'a str),
    Skip,
    Malformed,
}

fn is_hex_pairs(field: &str) -> bool {
    let mut any = false;
    for tok in field.split_ascii_whitespace() {
        if tok.len() != 2 || !tok.bytes().all(|b| b.is_ascii_hexdigit()) {
            return false;
        }
        any = true;
    }
    any
}

fn classify(line: &str) -> Line<'_> {
    let trimmed = line.trim_start();
    let Some(colon) = trimmed.find(':') else {
        return Line::Skip;
    };
    let addr = &trimmed[..colon];
    if addr.is_empty() || !addr.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Line::Skip;
    }
    // The instruction prefix is `<hex>:\t`; anything else after the colon
    // (e.g. the `file format` banner) is not an instruction line.
    let Some(rest) = trimmed[colon + 1..].strip_prefix('\t') else {
        return Line::Skip;
    };

    let mut fields = rest.splitn(2, '\t');
    let first = fields.next().unwrap_or("");
    let mnemonic_field = if is_hex_pairs(first) {
        match fields.next() {
            Some(m) => m,
            // address + bytes only: wrapped tail of the previous instruction
            None => return Line::Skip,
        }
    } else if first.trim().is_empty() {
        match fields.next() {
            Some(m) => m,
            None => return Line::Malformed,
        }
    } else {
        // `--no-show-raw-insn` output: the mnemonic follows the address directly
        rest
    };

    match mnemonic_field.split_ascii_whitespace().next() {
        Some(tok) => Line::Instruction(tok),
        None => Line::Malformed,
    }
}

/// Extracts the mnemonic of every instruction line of `text`, lowercased.
///
/// `(bad)` decode markers and assembler data directives (`.byte`, `.word`,
/// ...) are skipped. Prefixes printed in the mnemonic position (`lock`,
/// `rep`) are kept as opcodes; operands are ignored.
pub fn parse_disassembly(text: &str, source_id: &str) -> Result<OpcodeSequence> {
    let mut opcodes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        match classify(line) {
            Line::Skip => {}
            Line::Malformed => {
                return Err(Error::MalformedLine {
                    line: idx + 1,
                    text: line.to_string(),
                })
            }
            Line::Instruction(tok) => {
                if tok == BAD_MARKER || tok.starts_with('.') {
                    continue;
                }
                opcodes.push(tok.to_ascii_lowercase());
            }
        }
    }
    Ok(OpcodeSequence {
        source_id: source_id.to_string(),
        opcodes,
    })
}

/// Reads and parses a listing file.
pub fn parse_file(path: &Path, source_id: &str) -> Result<OpcodeSequence> {
    if !path.exists() {
        return Err(Error::InputNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Format(format!("{}: not valid UTF-8: {e}", path.display())))?;
    parse_disassembly(&text, source_id)
}

/// Corpus-wide opcode vocabulary, sorted lexicographically; an opcode's id
/// is its position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MasterOpcodeList {
    entries: Vec<String>,
    ids: HashMap<String, usize>,
}

impl MasterOpcodeList {
    /// Builds a list from arbitrary mnemonics (sorted and deduplicated).
    pub fn from_mnemonics<I, S>(mnemonics: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = mnemonics.into_iter().map(Into::into).collect();
        let entries: Vec<String> = set.into_iter().collect();
        let ids = entries
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Self { entries, ids }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn id(&self, mnemonic: &str) -> Option<usize> {
        self.ids.get(mnemonic).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One mnemonic per line; line number (from 0) is the id.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for m in &self.entries {
            writeln!(out, "{m}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputNotFound(path.to_path_buf()));
        }
        let reader = BufReader::new(fs::File::open(path)?);
        let mut entries = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let m = line.trim();
            if !m.is_empty() {
                entries.push(m.to_string());
            }
        }
        let list = Self::from_mnemonics(entries.iter().cloned());
        if list.entries != entries {
            return Err(Error::Format(format!(
                "{}: master list must be sorted and free of duplicates",
                path.display()
            )));
        }
        Ok(list)
    }
}

/// Union of all mnemonics in `sequences`.
pub fn build_master_list<'a, I>(sequences: I) -> MasterOpcodeList
where
    I: IntoIterator<Item = &'a OpcodeSequence>,
{
    MasterOpcodeList::from_mnemonics(
        sequences
            .into_iter()
            .flat_map(|s| s.opcodes.iter().cloned()),
    )
}

/// Per-file opcode counts in master-list order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeHistogram {
    pub source_id: String,
    pub counts: Vec<u64>,
    /// Opcodes of the sequence that are not in the master list.
    pub unseen_count: u64,
}

pub fn histogram(seq: &OpcodeSequence, master: &MasterOpcodeList) -> Result<OpcodeHistogram> {
    if master.is_empty() {
        return Err(Error::EmptyMaster);
    }
    let mut counts = vec![0u64; master.len()];
    let mut unseen_count = 0;
    for op in &seq.opcodes {
        match master.id(op) {
            Some(i) => counts[i] += 1,
            None => unseen_count += 1,
        }
    }
    Ok(OpcodeHistogram {
        source_id: seq.source_id.clone(),
        counts,
        unseen_count,
    })
}
