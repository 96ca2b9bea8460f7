use super::params::{ParamId, ParamStore};
use super::tape::{Grads, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Store<'p> {
    Shared(&'p ParamStore),
    Mut(&'p mut ParamStore),
}

/// One forward pass: a fresh tape plus lazily bound parameters.
///
/// Training contexts borrow the store mutably so batch norm can update its
/// running statistics; evaluation contexts only read it and can run on
/// several workers at once.
pub struct Ctx<'p> {
    pub tape: Tape,
    store: Store<'p>,
    bound: Vec<Option<Var>>,
    mode: Mode,
    frozen: bool,
}

impl<'p> Ctx<'p> {
    pub fn train(store: &'p mut ParamStore) -> Self {
        let n = store.len();
        Ctx {
            tape: Tape::new(),
            store: Store::Mut(store),
            bound: vec![None; n],
            mode: Mode::Train,
            frozen: false,
        }
    }

    pub fn eval(store: &'p ParamStore) -> Self {
        Ctx {
            tape: Tape::new(),
            bound: vec![None; store.len()],
            store: Store::Shared(store),
            mode: Mode::Eval,
            frozen: false,
        }
    }

    /// Evaluation context whose parameters are constants.
    pub fn frozen(store: &'p ParamStore) -> Self {
        let mut c = Self::eval(store);
        c.frozen = true;
        c
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore {
        match &self.store {
            Store::Shared(s) => s,
            Store::Mut(s) => s,
        }
    }

    pub(crate) fn store_mut(&mut self) -> Result<&mut ParamStore> {
        match &mut self.store {
            Store::Mut(s) => Ok(s),
            Store::Shared(_) => Err(Error::Config(
                "parameter store is read-only in this context".into(),
            )),
        }
    }

    /// Tape variable for a parameter, binding it on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let p = self.store().get(id);
        let value = p.value.clone();
        let v = if p.trainable && !self.frozen {
            self.tape.leaf(value)
        } else {
            self.tape.constant(value)
        };
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn bound(&self, id: ParamId) -> Option<Var> {
        self.bound[id.index()]
    }

    /// Gradient per parameter (indexed like the store), `None` for parameters
    /// the loss does not depend on.
    pub fn param_grads(&self, grads: &mut Grads) -> Vec<Option<Vec<f64>>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| grads.take(v)))
            .collect()
    }

    /// Runs backward from `loss` and returns per-parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        let mut g = self.tape.backward(loss)?;
        Ok(self.param_grads(&mut g))
    }
}
