use crate::{Float, Graph, ParamId, ParamStore, Var};

/// A graph paired with the parameters a forward pass reads.
#[derive(Clone, Copy)]
pub struct Scope<'a, T: Float> {
    pub graph: &'a Graph<T>,
    pub params: &'a ParamStore<T>,
}

impl<'a, T: Float> Scope<'a, T> {
    pub fn new(graph: &'a Graph<T>, params: &'a ParamStore<T>) -> Self {
        Self { graph, params }
    }

    pub fn param(&self, id: ParamId) -> Var<'a, T> {
        self.graph.param(self.params, id)
    }
}
