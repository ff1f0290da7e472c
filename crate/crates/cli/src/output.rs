//! Deterministic serialization: every float is written with 17 significant
//! digits, JSON documents carry `schema: 1` and the resolved configuration,
//! CSV and `.dat` files start with the configuration as `#` comments.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA: u64 = 1;

/// `d.dddddddddddddddde±x`; `nan`/`inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct Fixed<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with fixed-precision floats.
pub fn to_json_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serializing a Value into memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// `{schema, command, config}` header of every JSON document.
pub fn document(command: &str, config: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    m.insert("command".into(), json!(command));
    m.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes"),
    );
    m
}

/// Collects output files under one directory.
pub struct Sink {
    dir: PathBuf,
    echo: String,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, source: io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Sink {
    pub fn new(dir: &Path, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let echo = config
            .to_ini()
            .lines()
            .map(|l| format!("# {l}").trim_end().to_string() + "\n")
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            echo,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, doc: Map<String, Value>) -> Result<(), CliError> {
        self.write(name, to_json_string(&Value::Object(doc)).as_bytes())
    }

    /// CSV with the configuration echoed as leading `#` lines.
    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut wtr = csv::Writer::from_writer(self.echo.clone().into_bytes());
        let path = self.dir.join(name);
        let csv_err = |e: csv::Error| io_err(&path, io::Error::other(e));
        wtr.write_record(header).map_err(csv_err)?;
        for r in rows {
            wtr.write_record(r).map_err(csv_err)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| io_err(&path, e.into_error()))?;
        self.write(name, &bytes)
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn dat(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut text = self.echo.clone();
        text.push_str(&format!("# {}\n", header.join(" ")));
        for r in rows {
            text.push_str(&r.join(" "));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }
}
