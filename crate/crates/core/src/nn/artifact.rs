//! Self-contained model artifact: network, input scaler and feature schema
//! in one line-oriented text file.
//!
//! ```text
//! busdev-model 1
//! spec <input_dim> <hidden,...|-> <output_dim> relu
//! schema.version <id>
//! schema.far_threshold_m <f64>
//! schema.coordinate_mode <geodetic|projected>
//! schema.weather_max_gap_s <i64>
//! schema.rush <HH:MM:SS-HH:MM:SS> ...
//! schema.routes <n>
//! route <route_id>                 (n lines)
//! scaler.min <f64> ...
//! scaler.max <f64> ...
//! weights <layer> <rows> <cols>    (then `rows` lines of `cols` values, per layer)
//! biases <layer> <n>               (then one line of `n` values, per layer)
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a reloaded model
//! reproduces predictions bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveTime;

use super::{param_count, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::features::{CoordinateMode, FeatureSchema, ScalerParams};

pub const ARTIFACT_MAGIC: &str = "busdev-model";
pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub scaler: ScalerParams,
    pub schema: FeatureSchema,
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:?}").expect("writing to a String");
    }
    s
}

impl Model {
    pub fn new(network: Network, scaler: ScalerParams, schema: FeatureSchema) -> Result<Self> {
        let dims = schema.total_dims();
        if scaler.dims() != dims || network.spec().input_dim != dims {
            return Err(Error::ArtifactShape(format!(
                "schema has {dims} inputs, scaler {}, network {}",
                scaler.dims(),
                network.spec().input_dim
            )));
        }
        Ok(Model {
            network,
            scaler,
            schema,
        })
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        let spec = self.network.spec();
        writeln!(w, "{ARTIFACT_MAGIC} {ARTIFACT_VERSION}")?;
        writeln!(
            w,
            "spec {} {} {} relu",
            spec.input_dim,
            spec.hidden_label(),
            spec.output_dim
        )?;
        let s = &self.schema;
        writeln!(w, "schema.version {}", s.version)?;
        writeln!(w, "schema.far_threshold_m {:?}", s.far_threshold_m)?;
        writeln!(w, "schema.coordinate_mode {}", s.coordinate_mode.as_str())?;
        writeln!(w, "schema.weather_max_gap_s {}", s.weather_max_gap_s)?;
        let rush: Vec<String> = s
            .rush_windows
            .iter()
            .map(|(a, b)| format!("{}-{}", a.format("%H:%M:%S"), b.format("%H:%M:%S")))
            .collect();
        writeln!(w, "schema.rush {}", rush.join(" "))?;
        writeln!(w, "schema.routes {}", s.routes().len())?;
        for r in s.routes() {
            writeln!(w, "route {r}")?;
        }
        writeln!(w, "scaler.min {}", join_floats(&self.scaler.min))?;
        writeln!(w, "scaler.max {}", join_floats(&self.scaler.max))?;
        let net = &self.network;
        for (i, l) in net.layout().iter().enumerate() {
            writeln!(w, "weights {i} {} {}", l.fan_out, l.fan_in)?;
            for row in net.weights(i).chunks_exact(l.fan_in) {
                writeln!(w, "{}", join_floats(row))?;
            }
        }
        for (i, l) in net.layout().iter().enumerate() {
            writeln!(w, "biases {i} {}", l.fan_out)?;
            writeln!(w, "{}", join_floats(net.biases(i)))?;
        }
        writeln!(w, "end")?;
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut lines = Lines {
            inner: BufReader::new(r).lines(),
            line: 0,
        };
        let header = lines.next_line("header")?;
        match header.split_once(' ') {
            Some((ARTIFACT_MAGIC, ARTIFACT_VERSION)) => {}
            Some((ARTIFACT_MAGIC, other)) => return Err(Error::ArtifactVersion(other.to_string())),
            _ => return Err(Error::ArtifactVersion(header)),
        }

        let spec_line = lines.keyed("spec")?;
        let parts: Vec<&str> = spec_line.split_whitespace().collect();
        if parts.len() != 4 || parts[3] != "relu" {
            return Err(lines.malformed(format!("bad spec line `{spec_line}`")));
        }
        let spec = NetworkSpec::new(
            lines.parse(parts[0])?,
            NetworkSpec::parse_hidden(parts[1]).map_err(|e| lines.malformed(e.to_string()))?,
            lines.parse(parts[2])?,
        );
        spec.validate()
            .map_err(|e| Error::ArtifactShape(e.to_string()))?;

        let version = lines.keyed("schema.version")?;
        let raw = lines.keyed("schema.far_threshold_m")?;
        let far_threshold_m = lines.parse(&raw)?;
        let mode = lines.keyed("schema.coordinate_mode")?;
        let coordinate_mode = CoordinateMode::parse(&mode)
            .ok_or_else(|| lines.malformed(format!("coordinate mode `{mode}`")))?;
        let raw = lines.keyed("schema.weather_max_gap_s")?;
        let weather_max_gap_s = lines.parse(&raw)?;
        let rush_line = lines.keyed("schema.rush")?;
        let rush_windows = rush_line
            .split_whitespace()
            .map(|w| {
                let (a, b) = w.split_once('-')?;
                let t = |s| NaiveTime::parse_from_str(s, "%H:%M:%S").ok();
                Some((t(a)?, t(b)?))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| lines.malformed(format!("rush windows `{rush_line}`")))?;
        let raw = lines.keyed("schema.routes")?;
        let n_routes: usize = lines.parse(&raw)?;
        let mut routes = Vec::with_capacity(n_routes);
        for _ in 0..n_routes {
            routes.push(lines.keyed("route")?);
        }
        let mut schema = FeatureSchema::new(routes);
        if schema.routes().len() != n_routes {
            return Err(Error::ArtifactShape(
                "route vocabulary is not unique".into(),
            ));
        }
        schema.version = version;
        schema.far_threshold_m = far_threshold_m;
        schema.coordinate_mode = coordinate_mode;
        schema.weather_max_gap_s = weather_max_gap_s;
        schema.rush_windows = rush_windows;

        let raw = lines.keyed("scaler.min")?;

        let min = lines.floats(&raw)?;
        let raw = lines.keyed("scaler.max")?;
        let max = lines.floats(&raw)?;
        let dims = schema.total_dims();
        if min.len() != dims || max.len() != dims {
            return Err(Error::ArtifactShape(format!(
                "scaler has {}/{} entries, schema needs {dims}",
                min.len(),
                max.len()
            )));
        }

        let layer_dims = spec.layer_dims();
        let mut params = vec![0.0; param_count(&spec)];
        let layout = super::layout_for(&spec);
        for (i, &(fan_in, fan_out)) in layer_dims.iter().enumerate() {
            let head = lines.keyed("weights")?;
            let expected = format!("{i} {fan_out} {fan_in}");
            if head != expected {
                return Err(Error::ArtifactShape(format!(
                    "layer {i} declared `{head}`, spec implies `{expected}`"
                )));
            }
            let base = layout[i].weights;
            for r in 0..fan_out {
                let raw = lines.next_line("weight row")?;
                let row = lines.floats(&raw)?;
                if row.len() != fan_in {
                    return Err(Error::ArtifactShape(format!(
                        "layer {i} row {r} has {} weights, expected {fan_in}",
                        row.len()
                    )));
                }
                params[base + r * fan_in..base + (r + 1) * fan_in].copy_from_slice(&row);
            }
        }
        for (i, &(_, fan_out)) in layer_dims.iter().enumerate() {
            let head = lines.keyed("biases")?;
            if head != format!("{i} {fan_out}") {
                return Err(Error::ArtifactShape(format!(
                    "layer {i} biases declared `{head}`"
                )));
            }
            let raw = lines.next_line("bias row")?;
            let b = lines.floats(&raw)?;
            if b.len() != fan_out {
                return Err(Error::ArtifactShape(format!(
                    "layer {i} has {} biases, expected {fan_out}",
                    b.len()
                )));
            }
            let base = layout[i].biases;
            params[base..base + fan_out].copy_from_slice(&b);
        }
        match lines.next_line("end marker")?.as_str() {
            "end" => {}
            other => {
                return Err(Error::ArtifactShape(format!(
                    "unexpected `{}` after last layer",
                    other.chars().take(40).collect::<String>()
                )))
            }
        }
        let network =
            Network::from_params(&spec, params).map_err(|e| Error::ArtifactShape(e.to_string()))?;
        Model::new(network, ScalerParams { min, max }, schema)
    }
}

struct Lines<B: BufRead> {
    inner: std::io::Lines<B>,
    line: u64,
}

impl<B: BufRead> Lines<B> {
    fn next_line(&mut self, expecting: &str) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(Error::ArtifactTruncated(format!(
                "end of file at line {} while reading {expecting}",
                self.line
            ))),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next_line(key)?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            _ if l == key => Ok(String::new()),
            _ => Err(Error::ArtifactShape(format!(
                "line {}: expected `{key}`, found `{}`",
                self.line,
                l.chars().take(40).collect::<String>()
            ))),
        }
    }

    fn malformed(&self, detail: String) -> Error {
        Error::Malformed {
            what: "model artifact",
            line: self.line,
            detail,
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.trim()
            .parse()
            .map_err(|_| self.malformed(format!("cannot parse `{s}`")))
    }

    fn floats(&self, s: &str) -> Result<Vec<f64>> {
        s.split_whitespace().map(|t| self.parse(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn model() -> Model {
        let schema = FeatureSchema::new(["1", "22", "3"]);
        let dims = schema.total_dims();
        let net = Network::init(&NetworkSpec::new(dims, vec![7, 5], 1), 9).unwrap();
        let scaler = ScalerParams {
            min: (0..dims).map(|i| -(i as f64) / 3.0).collect(),
            max: (0..dims).map(|i| i as f64 * 1.1 + 0.1).collect(),
        };
        Model::new(net, scaler, schema).unwrap()
    }

    fn bytes(m: &Model) -> Vec<u8> {
        let mut v = Vec::new();
        m.write_to(&mut v).unwrap();
        v
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = Model::read_from(bytes(&m).as_slice()).unwrap();
        assert_eq!(back, m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..m.schema.total_dims())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let a = m.network.predict(&x).unwrap();
            let b = back.network.predict(&x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(bytes(&back), bytes(&m));
    }

    #[test]
    fn unknown_version() {
        let text = String::from_utf8(bytes(&model())).unwrap().replacen(
            "busdev-model 1",
            "busdev-model 9",
            1,
        );
        assert!(
            matches!(Model::read_from(text.as_bytes()), Err(Error::ArtifactVersion(v)) if v == "9")
        );
    }

    #[test]
    fn truncated_file() {
        let b = bytes(&model());
        let cut = &b[..b.len() / 2];
        let cut = &cut[..cut.iter().rposition(|&c| c == b'\n').unwrap() + 1];
        assert!(matches!(
            Model::read_from(cut),
            Err(Error::ArtifactTruncated(_))
        ));
    }

    #[test]
    fn declared_shape_mismatch() {
        let text = String::from_utf8(bytes(&model())).unwrap();
        let bad = text.replacen("weights 0 7 ", "weights 0 8 ", 1);
        assert!(matches!(
            Model::read_from(bad.as_bytes()),
            Err(Error::ArtifactShape(_))
        ));
        // Drop one value from the first weight row.
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let at = lines
            .iter()
            .position(|l| l.starts_with("weights 0"))
            .unwrap()
            + 1;
        let mut row: Vec<&str> = lines[at].split(' ').collect();
        row.pop();
        lines[at] = row.join(" ");
        let bad = lines.join("\n") + "\n";
        assert!(matches!(
            Model::read_from(bad.as_bytes()),
            Err(Error::ArtifactShape(_))
        ));
    }
}
