//! Model checkpoints: a line-oriented text format whose floats are written
//! as IEEE-754 bit patterns in hex, so round-trips are bit-exact.
//!
//! ```text
//! drekit-checkpoint v1
//! kind mlp
//! mode exponential
//! rbar 4124f8b588e368f1
//! spectral_norm 1
//! dims 2 32 32 1
//! tensor w0 2 32
//! <64 hex words on one line>
//! tensor b0 1 32
//! ...
//! tensor u0 1 2        (one per weight matrix: the persisted SN vector)
//! ```
//!
//! Kernel checkpoints carry `sigma`, `floor`, `centers` and `weights`.

use super::{KernelRatioModel, MlpCore, MlpRatioModel, OutputMode};
use crate::autodiff::{SpectralState, Tensor};
use crate::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Mlp(MlpRatioModel),
    Kernel(KernelRatioModel),
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn push_tensor(out: &mut String, name: &str, t: &Tensor) {
    out.push_str(&format!("tensor {} {} {}\n", name, t.rows(), t.cols()));
    let words: Vec<String> = t.data().iter().map(|&v| hex(v)).collect();
    out.push_str(&words.join(" "));
    out.push('\n');
}

/// Serialize a model; see the module docs for the layout.
pub fn checkpoint_to_string(model: &Checkpoint) -> String {
    let mut out = String::from("drekit-checkpoint v1\n");
    match model {
        Checkpoint::Mlp(m) => {
            out.push_str("kind mlp\n");
            out.push_str(&format!("mode {}\n", m.mode.name()));
            out.push_str(&format!("rbar {}\n", hex(m.rbar)));
            out.push_str(&format!(
                "spectral_norm {}\n",
                if m.spectral_norm { 1 } else { 0 }
            ));
            let dims: Vec<String> = m.core.dims.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!("dims {}\n", dims.join(" ")));
            for i in 0..m.core.weights.len() {
                push_tensor(&mut out, &format!("w{i}"), &m.core.weights[i]);
                push_tensor(&mut out, &format!("b{i}"), &m.core.biases[i]);
            }
            for (i, st) in m.sn_states.iter().enumerate() {
                push_tensor(&mut out, &format!("u{i}"), &Tensor::row(&st.u));
            }
        }
        Checkpoint::Kernel(k) => {
            out.push_str("kind kernel\n");
            out.push_str(&format!("sigma {}\n", hex(k.sigma)));
            out.push_str(&format!("floor {}\n", hex(k.floor)));
            push_tensor(&mut out, "centers", &k.centers);
            push_tensor(&mut out, "weights", &Tensor::row(&k.weights));
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(model))?;
    Ok(())
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: "unexpected end of checkpoint".into(),
            })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_hex(line: usize, word: &str) -> Result<f64> {
    u64::from_str_radix(word, 16)
        .map(f64::from_bits)
        .map_err(|_| parse_err(line, format!("bad hex float `{word}`")))
}

fn expect_field<'a>(lines: &mut Lines<'a>, key: &str) -> Result<(usize, &'a str)> {
    let (ln, l) = lines.next_line()?;
    let rest = l
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| parse_err(ln, format!("expected `{key} ...`, found `{l}`")))?;
    Ok((ln, rest))
}

fn read_tensor(lines: &mut Lines<'_>, name: &str) -> Result<Tensor> {
    let (ln, header) = lines.next_line()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
        return Err(parse_err(
            ln,
            format!("expected `tensor {name} R C`, found `{header}`"),
        ));
    }
    let rows: usize = parts[2]
        .parse()
        .map_err(|_| parse_err(ln, "bad row count"))?;
    let cols: usize = parts[3]
        .parse()
        .map_err(|_| parse_err(ln, "bad col count"))?;
    let (dln, data_line) = lines.next_line()?;
    let mut data = Vec::with_capacity(rows * cols);
    for word in data_line.split_whitespace() {
        data.push(parse_hex(dln, word)?);
    }
    if data.len() != rows * cols {
        return Err(parse_err(
            dln,
            format!("expected {} values, found {}", rows * cols, data.len()),
        ));
    }
    Ok(Tensor::new(rows, cols, data))
}

pub fn checkpoint_from_string(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (ln, magic) = lines.next_line()?;
    if magic != "drekit-checkpoint v1" {
        return Err(parse_err(ln, "not a drekit checkpoint"));
    }
    let (_, kind) = expect_field(&mut lines, "kind")?;
    match kind {
        "mlp" => {
            let (mln, mode) = expect_field(&mut lines, "mode")?;
            let mode = OutputMode::parse(mode).map_err(|_| parse_err(mln, "bad output mode"))?;
            let (rln, rbar) = expect_field(&mut lines, "rbar")?;
            let rbar = parse_hex(rln, rbar)?;
            let (sln, sn) = expect_field(&mut lines, "spectral_norm")?;
            let spectral_norm = match sn {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err(sln, "spectral_norm must be 0 or 1")),
            };
            let (dln, dims_str) = expect_field(&mut lines, "dims")?;
            let dims: Vec<usize> = dims_str
                .split_whitespace()
                .map(|w| w.parse().map_err(|_| parse_err(dln, "bad dim")))
                .collect::<Result<_>>()?;
            if dims.len() < 2 {
                return Err(parse_err(dln, "need at least two dims"));
            }
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for i in 0..dims.len() - 1 {
                weights.push(read_tensor(&mut lines, &format!("w{i}"))?);
                biases.push(read_tensor(&mut lines, &format!("b{i}"))?);
            }
            let mut sn_states = Vec::new();
            for i in 0..dims.len() - 1 {
                let u = read_tensor(&mut lines, &format!("u{i}"))?;
                sn_states.push(SpectralState {
                    u: u.data().to_vec(),
                    n_power_iters: 1,
                });
            }
            Ok(Checkpoint::Mlp(MlpRatioModel {
                core: MlpCore {
                    dims,
                    weights,
                    biases,
                },
                mode,
                rbar,
                spectral_norm,
                sn_states,
            }))
        }
        "kernel" => {
            let (sln, sigma) = expect_field(&mut lines, "sigma")?;
            let sigma = parse_hex(sln, sigma)?;
            let (fln, floor) = expect_field(&mut lines, "floor")?;
            let floor = parse_hex(fln, floor)?;
            let centers = read_tensor(&mut lines, "centers")?;
            let weights = read_tensor(&mut lines, "weights")?;
            Ok(Checkpoint::Kernel(KernelRatioModel {
                centers,
                weights: weights.data().to_vec(),
                sigma,
                floor,
            }))
        }
        other => Err(parse_err(ln, format!("unknown checkpoint kind `{other}`"))),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_string(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DEFAULT_RBAR;

    #[test]
    fn mlp_roundtrip_is_bit_exact() {
        let m = MlpRatioModel::init(3, 8, 11, OutputMode::Exponential, DEFAULT_RBAR, true);
        let text = checkpoint_to_string(&Checkpoint::Mlp(m.clone()));
        let Checkpoint::Mlp(back) = checkpoint_from_string(&text).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.rbar.to_bits(), m.rbar.to_bits());
        assert_eq!(back.spectral_norm, m.spectral_norm);
        for (a, b) in back.core.param_tensors().iter().zip(m.core.param_tensors()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.sn_states.iter().zip(&m.sn_states) {
            let ab: Vec<u64> = a.u.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.u.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        // And the serialized text itself round-trips byte-for-byte.
        let again = checkpoint_to_string(&Checkpoint::Mlp(back));
        assert_eq!(text, again);
    }

    #[test]
    fn kernel_roundtrip_is_bit_exact() {
        let k = KernelRatioModel::new(
            Tensor::new(2, 2, vec![0.1, -0.2, 0.3, 0.4]),
            vec![1.5, -0.25],
            0.7,
        );
        let text = checkpoint_to_string(&Checkpoint::Kernel(k.clone()));
        let Checkpoint::Kernel(back) = checkpoint_from_string(&text).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.centers.to_bits(), k.centers.to_bits());
        assert_eq!(back.sigma.to_bits(), k.sigma.to_bits());
        assert_eq!(back.weights, k.weights);
    }

    #[test]
    fn corrupt_header_is_a_parse_error() {
        assert!(matches!(
            checkpoint_from_string("nonsense"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
