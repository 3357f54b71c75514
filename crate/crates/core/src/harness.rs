//! Executing one input end to end: reset, inject and run, then report the
//! outcome and the coverage map.

use crate::coverage::CoverageMap;
use crate::machine::{Machine, MachineConfig, MachineError, RunOutcome};

/// Runs `input` on a freshly built machine.
pub fn run_one(image: &[u8], config: &MachineConfig, input: &[u8]) -> Result<(RunOutcome, CoverageMap), MachineError> {
    let mut m = Machine::new(image, config)?;
    m.reset(input);
    let outcome = m.run();
    Ok((outcome, m.coverage().clone()))
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("child process: {0}")]
    Child(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Something that can execute inputs and expose the last run's coverage.
pub trait Executor {
    fn execute(&mut self, input: &[u8]) -> Result<RunOutcome, HarnessError>;
    fn coverage(&self) -> &CoverageMap;
}

/// Executes in the current process, reusing one machine across runs.
pub struct InProcess {
    machine: Machine,
}

impl InProcess {
    pub fn new(image: &[u8], config: &MachineConfig) -> Result<InProcess, MachineError> {
        Ok(InProcess { machine: Machine::new(image, config)? })
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn machine_mut(&mut self) -> &mut Machine {
        &mut self.machine
    }
}

impl Executor for InProcess {
    fn execute(&mut self, input: &[u8]) -> Result<RunOutcome, HarnessError> {
        self.machine.reset(input);
        Ok(self.machine.run())
    }

    fn coverage(&self) -> &CoverageMap {
        self.machine.coverage()
    }
}
