use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Parses `1..10` (inclusive), `1,3,5` or a mix such as `1..3,8`.
/// Duplicates are dropped; an empty result is an error.
pub fn parse_grid<T>(spec: &str, what: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + PartialEq + Into<i64> + TryFrom<i64>,
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let mut values: Vec<T> = Vec::new();
    let mut push = |v: T| {
        if !values.contains(&v) {
            values.push(v);
        }
    };
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let lo: T = lo
                    .trim()
                    .parse()
                    .with_context(|| format!("{what} grid: bad bound `{lo}`"))?;
                let hi: T = hi
                    .trim()
                    .parse()
                    .with_context(|| format!("{what} grid: bad bound `{hi}`"))?;
                for v in lo.into()..=hi.into() {
                    match T::try_from(v) {
                        Ok(v) => push(v),
                        Err(_) => bail!("{what} grid: value {v} out of range"),
                    }
                }
            }
            None => push(
                item.parse()
                    .with_context(|| format!("{what} grid: bad value `{item}`"))?,
            ),
        }
    }
    if values.is_empty() {
        bail!("{what} grid `{spec}` is empty");
    }
    Ok(values)
}
