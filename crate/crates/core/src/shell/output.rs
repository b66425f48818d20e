//! Energy log and field dumps for a run.
//!
//! `energy.csv` gets the header and one row per step, flushed as it goes.
//! `fields_NNNNN.vtk` holds the state after step `NNNNN` every `dump_every`
//! steps (step 0 is the initial state). A failing run leaves
//! `failure_NNNNN.vtk` with the last good state and the error in its title.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::constitutive::{cutoff_pi, Phase};
use crate::engine::{EnergyReport, EngineError, RunObserver, SimState, CSV_HEADER};
use crate::fields::VtkDump;

pub struct RunWriter {
    dir: PathBuf,
    dump_every: usize,
    csv: BufWriter<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, dump_every: usize) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(File::create(dir.join("energy.csv"))?);
        writeln!(csv, "{CSV_HEADER}")?;
        csv.flush()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            dump_every,
            csv,
        })
    }

    pub fn csv_path(&self) -> PathBuf {
        self.dir.join("energy.csv")
    }

    fn dump<const D: usize>(&self, name: &str, title: &str, state: &SimState<D>) -> io::Result<()> {
        let prob = &state.problem;
        let phase: Vec<f64> = prob
            .phase
            .iter()
            .map(|p| if *p == Phase::Solid { 1.0 } else { 0.0 })
            .collect();
        let pi: Vec<f64> = prob
            .distortion
            .iter()
            .map(|a| match crate::kinematics::deformation_gradient(a) {
                Ok(f) => cutoff_pi(&f, prob.eps),
                Err(_) => 0.0,
            })
            .collect();
        let text = VtkDump::new(&prob.grid, title)
            .vectors("xi", &state.field.xi)
            .vectors("velocity", &state.velocity)
            .scalars("solid", &phase)
            .scalars("det_grad_xi", &prob.det_grad)
            .scalars("pi_eps", &pi)
            .finish();
        fs::write(self.dir.join(name), text)
    }
}

impl<const D: usize> RunObserver<D> for RunWriter {
    fn on_step(&mut self, before: &SimState<D>, report: &EnergyReport, after: &SimState<D>) -> io::Result<()> {
        writeln!(self.csv, "{}", report.csv_row())?;
        self.csv.flush()?;
        if self.dump_every == 0 {
            return Ok(());
        }
        if before.step == 0 {
            self.dump("fields_00000.vtk", "reftrack t=0", before)?;
        }
        if after.step.is_multiple_of(self.dump_every) {
            let title = format!("reftrack t={}", after.field.t);
            self.dump(&format!("fields_{:05}.vtk", after.step), &title, after)?;
        }
        Ok(())
    }

    fn on_failure(&mut self, state: &SimState<D>, error: &EngineError) -> io::Result<()> {
        self.csv.flush()?;
        let title = format!("reftrack failure t={}: {error}", state.field.t);
        self.dump(&format!("failure_{:05}.vtk", state.step), &title, state)
    }
}
