//! Plain-text checkpoints of named tensors plus optional Adam state.
//!
//! ```text
//! checkpoint v1
//! config <key> <value>                       (any number, order kept)
//! param <name> <d0> [<d1> ...]               (then one value per line)
//! optimizer adam <step> <lr> <beta1> <beta2> <eps> <weight_decay>
//! moment1 <name> <d0> [<d1> ...]             (then one value per line)
//! moment2 <name> <d0> [<d1> ...]             (then one value per line)
//! ```
//!
//! The optimizer section is optional; when present it holds one `moment1`
//! and one `moment2` block per parameter, in parameter order. Values use
//! shortest round-trip notation, so checkpoints reload bit for bit.

use std::fmt::Write as _;

use super::{AdamState, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<AdamState>,
}

fn write_block(out: &mut String, tag: &str, name: &str, t: &Tensor) {
    let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    writeln!(out, "{tag} {name} {}", shape.join(" ")).unwrap();
    for v in t.data() {
        writeln!(out, "{v}").unwrap();
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::from("checkpoint v1\n");
        for (k, v) in &self.config {
            writeln!(out, "config {k} {v}").unwrap();
        }
        for (name, t) in &self.params {
            write_block(&mut out, "param", name, t);
        }
        if let Some(opt) = &self.optimizer {
            writeln!(
                out,
                "optimizer adam {} {} {} {} {} {}",
                opt.step, opt.lr, opt.beta1, opt.beta2, opt.eps, opt.weight_decay
            )
            .unwrap();
            for ((name, _), m) in self.params.iter().zip(&opt.m) {
                write_block(&mut out, "moment1", name, m);
            }
            for ((name, _), v) in self.params.iter().zip(&opt.v) {
                write_block(&mut out, "moment2", name, v);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut pos = 0;
        match lines.first() {
            Some((_, "checkpoint v1")) => pos += 1,
            Some((l, other)) => {
                return Err(Error::parse(*l, format!("expected `checkpoint v1`, got {other:?}")))
            }
            None => return Err(Error::parse(1, "empty checkpoint")),
        }

        let mut config = Vec::new();
        let mut params = Vec::new();
        let mut optimizer = None;
        while pos < lines.len() {
            let (l, line) = lines[pos];
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.first().copied() {
                Some("config") if tok.len() == 3 => {
                    config.push((tok[1].to_string(), tok[2].to_string()));
                    pos += 1;
                }
                Some("param") => {
                    let (name, t) = read_block(&lines, &mut pos, "param")?;
                    params.push((name, t));
                }
                Some("optimizer") => {
                    optimizer = Some(read_optimizer(&lines, &mut pos, &params)?);
                }
                _ => return Err(Error::parse(l, format!("unexpected line {line:?}"))),
            }
        }
        Ok(Self {
            config,
            params,
            optimizer,
        })
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.parse()
        .map_err(|e| Error::parse(line, format!("bad number {tok:?}: {e}")))
}

fn read_block(lines: &[(usize, &str)], pos: &mut usize, tag: &str) -> Result<(String, Tensor)> {
    let (l, header) = lines[*pos];
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() < 3 || tok[0] != tag {
        return Err(Error::parse(l, format!("expected `{tag} <name> <shape...>`")));
    }
    let shape = tok[2..]
        .iter()
        .map(|t| num::<usize>(t, l))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    if *pos + 1 + n > lines.len() {
        return Err(Error::parse(l, format!("{tag} {}: truncated values", tok[1])));
    }
    let data = lines[*pos + 1..*pos + 1 + n]
        .iter()
        .map(|&(vl, v)| num::<f64>(v, vl))
        .collect::<Result<Vec<_>>>()?;
    *pos += 1 + n;
    Ok((tok[1].to_string(), Tensor::new(shape, data)?))
}

fn read_optimizer(
    lines: &[(usize, &str)],
    pos: &mut usize,
    params: &[(String, Tensor)],
) -> Result<AdamState> {
    let (l, header) = lines[*pos];
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 8 || tok[1] != "adam" {
        return Err(Error::parse(l, "expected `optimizer adam <step> <lr> <beta1> <beta2> <eps> <wd>`"));
    }
    let mut state = AdamState {
        step: num(tok[2], l)?,
        lr: num(tok[3], l)?,
        beta1: num(tok[4], l)?,
        beta2: num(tok[5], l)?,
        eps: num(tok[6], l)?,
        weight_decay: num(tok[7], l)?,
        m: Vec::new(),
        v: Vec::new(),
    };
    *pos += 1;
    for (tag, target) in [("moment1", 0), ("moment2", 1)] {
        for (name, p) in params {
            if *pos >= lines.len() {
                return Err(Error::parse(l, "truncated optimizer state"));
            }
            let line = lines[*pos].0;
            let (got, t) = read_block(lines, pos, tag)?;
            if &got != name || t.shape() != p.shape() {
                return Err(Error::parse(line, format!("{tag} block {got} does not match param {name}")));
            }
            if target == 0 {
                state.m.push(t);
            } else {
                state.v.push(t);
            }
        }
    }
    Ok(state)
}
