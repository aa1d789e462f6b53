//! Flat text export of tabular MDPs.
//!
//! ```text
//! S A gamma
//! <S*A lines: P(. | s, a) for s in 0..S, a in 0..A, S entries each>
//! <S lines: R(s, .), A entries each>
//! terminal <zero or more terminal state indices>
//! ```
//!
//! Numbers are whitespace separated decimal text in shortest round-trip form.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::prob::Matrix;
use crate::scalar::Scalar;

pub fn write_mdp<T: Scalar>(mdp: &TabularMdp<T>) -> String {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = String::new();
    let _ = writeln!(out, "{ns} {na} {}", mdp.discount());
    for s in 0..ns {
        for a in 0..na {
            push_row(&mut out, mdp.transition_row(s, a));
        }
    }
    for s in 0..ns {
        push_row(&mut out, mdp.reward().row(s));
    }
    out.push_str("terminal");
    for (s, &t) in mdp.terminal_mask().iter().enumerate() {
        if t {
            let _ = write!(out, " {s}");
        }
    }
    out.push('\n');
    out
}

fn push_row<T: Scalar>(out: &mut String, row: &[T]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn read_mdp<T: Scalar + FromStr>(text: &str) -> Result<TabularMdp<T>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut next_line = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of input reading {what}")))
    };
    let header: Vec<&str> = next_line("header")?.split_whitespace().collect();
    if header.len() != 3 {
        return Err(Error::Parse("header must be `S A gamma`".into()));
    }
    let ns: usize = parse(header[0])?;
    let na: usize = parse(header[1])?;
    let discount: T = parse(header[2])?;

    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        transition.extend(parse_row::<T>(next_line("transition row")?, ns)?);
    }
    let mut reward = Vec::with_capacity(ns * na);
    for _ in 0..ns {
        reward.extend(parse_row::<T>(next_line("reward row")?, na)?);
    }
    let mut terminal = vec![false; ns];
    let tail = next_line("terminal line")?;
    let mut parts = tail.split_whitespace();
    if parts.next() != Some("terminal") {
        return Err(Error::Parse("expected `terminal` line".into()));
    }
    for p in parts {
        let s: usize = parse(p)?;
        if s >= ns {
            return Err(Error::Parse(format!("terminal index {s} out of range")));
        }
        terminal[s] = true;
    }
    TabularMdp::new(ns, na, transition, Matrix::new(ns, na, reward)?, discount, terminal)
}

fn parse<V: FromStr>(tok: &str) -> Result<V> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("cannot parse `{tok}`")))
}

fn parse_row<T: FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
    let row: Vec<T> = line.split_whitespace().map(parse).collect::<Result<_>>()?;
    if row.len() != n {
        return Err(Error::Parse(format!("expected {n} entries, found {}", row.len())));
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_grid_world, GridWorldSpec};

    #[test]
    fn grid_world_round_trips_exactly() {
        let spec = GridWorldSpec {
            width: 3,
            height: 2,
            ..GridWorldSpec::default()
        };
        let mdp: TabularMdp<f64> = build_grid_world(&spec).unwrap();
        let text = write_mdp(&mdp);
        assert!(text.starts_with("7 5 0.9\n"));
        assert_eq!(read_mdp::<f64>(&text).unwrap(), mdp);
    }

    #[test]
    fn truncated_input_is_a_parse_error() {
        assert!(matches!(read_mdp::<f64>("2 2 0.9\n1 0\n"), Err(Error::Parse(_))));
    }
}
