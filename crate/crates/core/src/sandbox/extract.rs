use rustpython_ast::{self as ast, Ranged};
use thiserror::Error;

use crate::detect::facts::parse_module;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response contains no parseable source defining solve()")]
pub struct NoCodeFound;

/// Pulls a runnable `solve()` definition out of a model response.
///
/// The first fenced block is preferred; otherwise the whole response is
/// tried as source. Top-level invocations of `solve` are removed, since the
/// judge appends its own.
pub fn extract_code(response: &str) -> Result<String, NoCodeFound> {
    let fenced = first_fenced_block(response);
    fenced
        .into_iter()
        .chain(std::iter::once(response.to_string()))
        .find_map(|candidate| prepare(&candidate))
        .ok_or(NoCodeFound)
}

fn first_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let body: Vec<&str> = lines.take_while(|l| !l.trim_start().starts_with("```")).collect();
    let mut block = body.join("\n");
    block.push('\n');
    Some(block)
}

fn prepare(candidate: &str) -> Option<String> {
    let suite = parse_module(candidate).ok()?;
    let defines_solve = suite.iter().any(|stmt| match stmt {
        ast::Stmt::FunctionDef(def) => def.name.as_str() == "solve",
        ast::Stmt::AsyncFunctionDef(def) => def.name.as_str() == "solve",
        _ => false,
    });
    if !defines_solve {
        return None;
    }
    let spans: Vec<(usize, usize)> = suite
        .iter()
        .filter(|stmt| invokes_solve(stmt))
        .map(|stmt| {
            let range = stmt.range();
            (usize::from(range.start()), usize::from(range.end()))
        })
        .collect();
    if spans.is_empty() {
        return Some(candidate.to_string());
    }
    tracing::warn!(target: "neogauge::sandbox", count = spans.len(), "stripped top-level solve() invocation");
    Some(remove_lines(candidate, &spans))
}

fn is_solve_call(expr: &ast::Expr) -> bool {
    match expr {
        ast::Expr::Call(call) => matches!(call.func.as_ref(), ast::Expr::Name(n) if n.id.as_str() == "solve"),
        _ => false,
    }
}

fn invokes_solve(stmt: &ast::Stmt) -> bool {
    match stmt {
        ast::Stmt::Expr(e) => is_solve_call(&e.value),
        ast::Stmt::If(guard) => {
            is_main_guard(&guard.test)
                && guard.orelse.is_empty()
                && guard.body.iter().all(|s| matches!(s, ast::Stmt::Expr(e) if is_solve_call(&e.value)))
        }
        _ => false,
    }
}

fn is_main_guard(test: &ast::Expr) -> bool {
    let ast::Expr::Compare(cmp) = test else { return false };
    let is_name = |e: &ast::Expr| matches!(e, ast::Expr::Name(n) if n.id.as_str() == "__name__");
    let is_main = |e: &ast::Expr| {
        matches!(e, ast::Expr::Constant(c) if matches!(&c.value, ast::Constant::Str(s) if s == "__main__"))
    };
    cmp.ops.len() == 1
        && matches!(cmp.ops[0], ast::CmpOp::Eq)
        && ((is_name(&cmp.left) && is_main(&cmp.comparators[0])) || (is_main(&cmp.left) && is_name(&cmp.comparators[0])))
}

/// Deletes the full lines covering each byte span.
fn remove_lines(source: &str, spans: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(source.len());
    let mut cursor = 0;
    for &(start, end) in spans {
        let line_start = source[..start].rfind('\n').map_or(0, |p| p + 1);
        let line_end = source[end..].find('\n').map_or(source.len(), |p| end + p + 1);
        out.push_str(&source[cursor..line_start]);
        cursor = line_end;
    }
    out.push_str(&source[cursor..]);
    out
}
