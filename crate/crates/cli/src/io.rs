use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration: exit 1.
    Usage(anyhow::Error),
    /// Unreadable or invalid input data: exit 2.
    Data(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) => e,
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn data(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

pub fn open_lines(path: &Path) -> CmdResult<io::Lines<BufReader<File>>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display())).data()?;
    Ok(BufReader::new(f).lines())
}

/// `-` is standard output.
pub fn create_output(path: &Path) -> CmdResult<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).data()?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display())).data()?;
    Ok(Box::new(BufWriter::new(f)))
}

pub fn write_json_line(w: &mut dyn Write, value: &impl Serialize) -> CmdResult {
    serde_json::to_writer(&mut *w, value).data()?;
    w.write_all(b"\n").context("writing output").data()
}

#[derive(Serialize)]
struct Resolved<'a, O: Serialize, C: Serialize> {
    command: &'a str,
    options: &'a O,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a C>,
}

/// Writes `<out_dir>/resolved-<command>.toml` with the options and config
/// the command actually ran with.
pub fn echo_resolved<O: Serialize, C: Serialize>(
    out_dir: &Path,
    command: &str,
    options: &O,
    config: Option<&C>,
) -> CmdResult<PathBuf> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display())).data()?;
    let text = toml::to_string(&Resolved { command, options, config }).context("serializing resolved config").usage()?;
    let path = out_dir.join(format!("resolved-{command}.toml"));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display())).data()?;
    Ok(path)
}

/// Per-record error reporting with a running count.
#[derive(Default)]
pub struct Diagnostics {
    pub ok: usize,
    pub failed: usize,
}

impl Diagnostics {
    pub fn record(&mut self, line: usize, id: Option<&str>, err: impl std::fmt::Display) {
        self.failed += 1;
        match id {
            Some(id) => eprintln!("line {line} ({id}): {err:#}"),
            None => eprintln!("line {line}: {err:#}"),
        }
    }

    pub fn summary(&self, what: &str) {
        eprintln!("{what}: {} ok, {} failed", self.ok, self.failed);
    }
}
