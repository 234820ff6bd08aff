//! Fixed-schema CSV writers. Every file starts with `# schema=1` followed by
//! a `# ` line carrying the resolved configuration.

use std::io::{self, Write};

use tpa_cavity::analytic::SolutionReport;
use tpa_cavity::sde::{EnsembleStats, Trajectory};

pub const SCHEMA: &str = "# schema=1";
pub const TRAJECTORY_HEADER: &str = "t,re_alpha,im_alpha,re_beta_star,im_beta_star";
pub const ENSEMBLE_HEADER: &str = "t,n_effective,mean_re_alpha,mean_im_alpha,mean_re_beta_star,mean_im_beta_star,\
mean_re_n,mean_im_n,var_re_alpha,var_im_alpha,var_re_beta_star,var_im_beta_star";
pub const ANALYTIC_HEADER: &str = "t,re_x,im_x,re_y,im_y,defect";

struct Row<'a, W: Write> {
    out: &'a mut W,
    first: bool,
}

impl<'a, W: Write> Row<'a, W> {
    fn new(out: &'a mut W) -> Self {
        Self { out, first: true }
    }

    fn sep(&mut self) -> io::Result<()> {
        if !self.first {
            self.out.write_all(b",")?;
        }
        self.first = false;
        Ok(())
    }

    fn num(&mut self, v: f64) -> io::Result<&mut Self> {
        self.sep()?;
        write!(self.out, "{v:.16e}")?;
        Ok(self)
    }

    fn count(&mut self, v: u64) -> io::Result<&mut Self> {
        self.sep()?;
        write!(self.out, "{v}")?;
        Ok(self)
    }

    fn end(&mut self) -> io::Result<()> {
        self.out.write_all(b"\n")
    }
}

fn preamble(out: &mut impl Write, config: &str, header: &str) -> io::Result<()> {
    write!(out, "{SCHEMA}\n# {config}\n{header}\n")
}

pub fn write_trajectory(out: &mut impl Write, config: &str, traj: &Trajectory) -> io::Result<()> {
    preamble(out, config, TRAJECTORY_HEADER)?;
    for (k, s) in traj.states.iter().enumerate() {
        Row::new(out)
            .num(traj.grid.t(k))?
            .num(s.alpha.re)?
            .num(s.alpha.im)?
            .num(s.beta_star.re)?
            .num(s.beta_star.im)?
            .end()?;
    }
    Ok(())
}

pub fn write_ensemble(out: &mut impl Write, config: &str, stats: &EnsembleStats) -> io::Result<()> {
    preamble(out, config, ENSEMBLE_HEADER)?;
    for k in 0..stats.grid.len() {
        Row::new(out)
            .num(stats.grid.t(k))?
            .count(stats.n_effective[k])?
            .num(stats.mean_alpha[k].re)?
            .num(stats.mean_alpha[k].im)?
            .num(stats.mean_beta_star[k].re)?
            .num(stats.mean_beta_star[k].im)?
            .num(stats.mean_n[k].re)?
            .num(stats.mean_n[k].im)?
            .num(stats.var_alpha_re[k])?
            .num(stats.var_alpha_im[k])?
            .num(stats.var_beta_re[k])?
            .num(stats.var_beta_im[k])?
            .end()?;
    }
    Ok(())
}

/// `defect` is the per-node residual of the full system.
pub fn write_analytic(out: &mut impl Write, config: &str, report: &SolutionReport, defect: &[f64]) -> io::Result<()> {
    preamble(out, config, ANALYTIC_HEADER)?;
    let grid = report.x.grid;
    for k in 0..grid.len() {
        Row::new(out)
            .num(grid.t(k))?
            .num(report.x.values[k].re)?
            .num(report.x.values[k].im)?
            .num(report.y.values[k].re)?
            .num(report.y.values[k].im)?
            .num(defect[k])?
            .end()?;
    }
    Ok(())
}
