use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl;

use super::rewrite::{render_template, template_checklist};
use super::{LogicBucket, PromptConfig, PromptError, SlotCategory};

/// Where a record's prompt text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    /// Deterministic tag rendering, no language model involved.
    Template,
    Rewriter,
}

/// One JSONL line: the config plus its rendered text and checklist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    #[serde(flatten)]
    pub config: PromptConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logic_pool: Option<LogicBucket>,
    pub prompt: String,
    pub prompt_source: TextSource,
    #[serde(default)]
    pub checklist_scaffold: Vec<SlotCategory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checklist: Vec<String>,
}

impl PromptRecord {
    pub fn from_config(config: PromptConfig) -> Self {
        let (prompt, source, checklist) = match &config.rewritten_text {
            Some(text) => (text.clone(), TextSource::Rewriter, Vec::new()),
            None => (render_template(&config), TextSource::Template, template_checklist(&config)),
        };
        Self::with_text(config, prompt, source, checklist)
    }

    pub fn with_text(config: PromptConfig, prompt: String, source: TextSource, checklist: Vec<String>) -> Self {
        Self {
            logic_pool: config.logic.as_ref().map(|t| t.bucket),
            checklist_scaffold: config.slot_categories(),
            prompt,
            prompt_source: source,
            checklist,
            config,
        }
    }

    /// Checklist length, falling back to the slot count.
    pub fn checklist_len(&self) -> Option<usize> {
        if !self.checklist.is_empty() {
            Some(self.checklist.len())
        } else {
            self.config.checklist_slots.map(usize::from)
        }
    }
}

/// Writes one record as a single line and flushes. The line is assembled
/// first, so a failed write leaves at most a partial trailing line.
pub fn append_record(record: &PromptRecord, sink: &mut impl Write) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(record).map_err(std::io::Error::other)?;
    line.push(b'\n');
    sink.write_all(&line)?;
    sink.flush()
}

pub fn append_config(config: &PromptConfig, sink: &mut impl Write) -> std::io::Result<()> {
    append_record(&PromptRecord::from_config(config.clone()), sink)
}

/// Next free id in a JSONL output: max id + 1, or 0 for an absent file.
/// A trailing line without a newline that does not parse is ignored.
pub fn resume_scan(path: &Path) -> Result<u64, PromptError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(PromptError::io(path, e)),
    };
    let mut next = 0u64;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut lineno = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| PromptError::io(path, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct IdOnly {
            id: u64,
        }
        match serde_json::from_str::<IdOnly>(line.trim_end()) {
            Ok(r) => next = next.max(r.id + 1),
            Err(_) if !complete => {
                log::warn!("{}: ignoring truncated trailing line {lineno}", path.display());
            }
            Err(e) => log::warn!("{}: skipping malformed line {lineno}: {e}", path.display()),
        }
    }
    Ok(next)
}

/// Parses every well-formed record, skipping other lines.
pub fn read_records(path: &Path) -> Result<Vec<PromptRecord>, PromptError> {
    let file = File::open(path).map_err(|e| PromptError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| PromptError::io(path, e))?;
        if let Ok(r) = serde_json::from_str(&line) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Exclusive appender for one JSONL output file.
#[derive(Debug)]
pub struct PromptWriter {
    file: File,
    path: PathBuf,
    next_id: u64,
}

impl PromptWriter {
    /// Opens (creating if needed) and locks `path`. With `resume` the next id
    /// continues after the existing records; otherwise the file must be
    /// empty or absent.
    pub fn open(path: &Path, resume: bool) -> Result<Self, PromptError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| PromptError::io(path, e))?;
        if !jsonl::try_lock(&file).map_err(|e| PromptError::io(path, e))? {
            return Err(PromptError::Locked(path.display().to_string()));
        }
        let len = file.metadata().map_err(|e| PromptError::io(path, e))?.len();
        if len > 0 && !resume {
            return Err(PromptError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output exists; pass resume"),
            ));
        }
        let next_id = resume_scan(path)?;
        jsonl::truncate_partial_tail(&mut file, path).map_err(|e| PromptError::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            next_id,
        })
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &PromptRecord) -> Result<(), PromptError> {
        append_record(record, &mut self.file).map_err(|e| PromptError::io(&self.path, e))?;
        self.next_id = self.next_id.max(record.config.id + 1);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{sample_config, CandidatePools, SamplingPolicy, Task};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn configs(n: u64) -> Vec<PromptConfig> {
        let pools = CandidatePools::sample();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .map(|id| {
                let task = if id % 3 == 0 { Task::Quality } else { Task::Alignment };
                sample_config(task, &pools, &SamplingPolicy::default(), id, &mut rng).unwrap()
            })
            .collect()
    }

    #[test]
    fn appends_round_trip() {
        let mut buf = Vec::new();
        let cs = configs(3);
        for c in &cs {
            append_config(c, &mut buf).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for (line, c) in lines.iter().zip(&cs) {
            let r: PromptRecord = serde_json::from_str(line).unwrap();
            assert_eq!(&r.config, c);
            assert_eq!(r.prompt_source, TextSource::Template);
        }
    }

    struct FailAfter {
        buf: Vec<u8>,
        budget: usize,
    }

    impl Write for FailAfter {
        fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
            if self.budget == 0 {
                return Err(std::io::Error::other("disk full"));
            }
            let n = data.len().min(self.budget);
            self.buf.extend_from_slice(&data[..n]);
            self.budget -= n;
            Ok(n)
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn failed_write_keeps_prior_lines() {
        let cs = configs(4);
        let mut first = Vec::new();
        append_config(&cs[0], &mut first).unwrap();
        append_config(&cs[1], &mut first).unwrap();
        let mut sink = FailAfter {
            buf: Vec::new(),
            budget: first.len() + 17,
        };
        append_config(&cs[0], &mut sink).unwrap();
        append_config(&cs[1], &mut sink).unwrap();
        assert!(append_config(&cs[2], &mut sink).is_err());
        assert_eq!(&sink.buf[..first.len()], &first[..]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        std::fs::write(&path, &sink.buf).unwrap();
        assert_eq!(resume_scan(&path).unwrap(), 2);

        let mut w = PromptWriter::open(&path, true).unwrap();
        assert_eq!(w.next_id(), 2);
        let mut c = cs[2].clone();
        c.id = w.next_id();
        w.append(&PromptRecord::from_config(c)).unwrap();
        drop(w);
        let records = read_records(&path).unwrap();
        assert_eq!(records.iter().map(|r| r.config.id).collect::<Vec<_>>(), [0, 1, 2]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| serde_json::from_str::<PromptRecord>(l).is_ok()));
    }

    #[test]
    fn resume_cases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        assert_eq!(resume_scan(&path).unwrap(), 0);
        let mut buf = Vec::new();
        for c in configs(3) {
            append_config(&c, &mut buf).unwrap();
        }
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(resume_scan(&path).unwrap(), 3);
    }

    #[test]
    fn second_writer_is_locked_out() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let _w = PromptWriter::open(&path, false).unwrap();
        assert!(matches!(PromptWriter::open(&path, true), Err(PromptError::Locked(_))));
    }

    #[test]
    fn refuses_to_overwrite_without_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let mut buf = Vec::new();
        append_config(&configs(1)[0], &mut buf).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert!(PromptWriter::open(&path, false).is_err());
    }
}
