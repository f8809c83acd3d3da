//! Fixed prompt texts. These are reproduced byte-for-byte, spelling
//! mistakes included, so runs stay comparable with the released dataset.

/// System preamble for every solving session, during augmentation and
/// benchmarking alike.
pub const SOLVING_PROMPT: &str = "You are a Python code generator, only return the import and python function. \
Input will be an very detailed description of task, output will be the code.
The input will be from command line, and the output will be printed to the console as well. \
Your result will be solely a function named solve(), and do not call this function in your code.
Make sure the code is free of bug and can pass the test cases provided. You can use any library you want. \
The test cases are provided in the code. Do not call the solve() function in your code.";

/// System preamble for technique detection. The technique list keeps its
/// duplicated "graph traversal" entry.
pub const DETECTION_PROMPT: &str = "You are a code reviewer. Detect all the programming techniques from the input \
and return a list of programming techniques. Only select the techniques from this list: \
['if statement', 'for loop', 'while loop', 'break statement', 'continue statement', 'pass statement', \
'match statement', 'recursion', 'stack', 'queue', 'tuple', 'set', 'dictionary', 'linked list', 'tree', \
'graph', 'graph traversal', 'two pointers', 'sliding window', 'matrix operation', 'hashmap', \
'depth first search', 'width first search', 'back tracking', 'dived & conquer', 'Kadanes algorithm', \
'binary search', 'heap', 'dynamic programming', 'greedy algorithm', 'misc', 'minimax', 'topological sort', \
'sorting', 'graph traversal']
Your output should look like this:
- technique 1
- technique 2
- technique 3
- ...";

/// Header line introducing the denied techniques in a constrained problem.
pub const CONSTRAINT_HEADER: &str = "Programming constraints: DO NOT use the following techniques";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonicalize, Technique, TechniqueSet};

    #[test]
    fn detection_list_matches_taxonomy() {
        let start = DETECTION_PROMPT.find('[').unwrap();
        let end = DETECTION_PROMPT.find(']').unwrap();
        let entries: Vec<&str> = DETECTION_PROMPT[start + 1..end]
            .split(", ")
            .map(|e| e.trim_matches('\''))
            .collect();
        assert_eq!(entries.len(), 35);
        let set: TechniqueSet = entries.iter().map(|e| canonicalize(e).unwrap()).collect();
        assert_eq!(set.len(), Technique::COUNT);
        for t in Technique::all() {
            assert!(entries.contains(&t.prompt_name()), "{t} missing");
        }
    }

    #[test]
    fn solving_prompt_lines() {
        let lines: Vec<&str> = SOLVING_PROMPT.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("You are a Python code generator"));
        assert!(lines[2].ends_with("Do not call the solve() function in your code."));
    }
}
