import io
import json
import os
import shutil
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout

from stratalloc.cli import EXIT_ERROR, EXIT_OK, build_parser, main


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class TestParser(unittest.TestCase):

    def test_solve_arguments(self):
        """Problem flags land on RunConfig field names"""
        args = build_parser().parse_args(
            ["solve", "--data", "table1", "--model", "Modified-E", "--value-fn", "det", "--costs", "1,2.5", "--characteristic", "BA"]
        )
        self.assertEqual(args.model, "modified-e")
        self.assertEqual(args.value_fn, "det")
        self.assertEqual(args.costs, (1.0, 2.5))
        self.assertEqual(args.characteristics, ["BA"])
        self.assertFalse(args.verbose)

    def test_invalid_choice(self):
        """Unknown models stop the parser with exit status 2"""
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as context:
                build_parser().parse_args(["solve", "--model", "w"])
        self.assertEqual(context.exception.code, 2)


class TestCommands(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_solve(self):
        """The report goes to stdout"""
        code, out, _ = run(["solve", "--data", "table1", "--total-n", "1000"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Optimum Allocation Report (deterministic / trace)", out)

    def test_solve_from_run_file(self):
        """Flags override the run file"""
        path = os.path.join(self.directory, "run.json")
        with open(path, "w", encoding="utf-8") as file:
            json.dump({"data": "toy_h2", "model": "V", "total_n": 8}, file)
        code, out, _ = run(["solve", "--config", path, "--model", "e", "--format", "json"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)["model"], "E / trace")

    def test_missing_budget(self):
        """Invalid input exits with status 2 and a message on stderr"""
        code, out, err = run(["solve", "--data", "table1"])
        self.assertEqual(code, EXIT_ERROR)
        self.assertEqual(out, "")
        self.assertIn("stratalloc: error:", err)

    def test_missing_file(self):
        """Unknown datasets are reported, not raised"""
        code, _, err = run(["solve", "--data", os.path.join(self.directory, "none.csv"), "--total-n", "10"])
        self.assertEqual(code, EXIT_ERROR)
        self.assertIn("File not found", err)

    def test_p_model_needs_tau(self):
        """--model p without --tau is a usage error"""
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as context:
                main(["solve", "--data", "toy_h2", "--total-n", "8", "--model", "p"])
        self.assertEqual(context.exception.code, 2)

    def test_compare_saves_report(self):
        """--report also writes the comparison to disk"""
        path = os.path.join(self.directory, "compare.txt")
        code, out, _ = run(["compare", "--data", "toy_h2", "--total-n", "8", "--report", path])
        self.assertEqual(code, EXIT_OK)
        with open(path, "r", encoding="utf-8") as file:
            self.assertEqual(file.read().rstrip("\n"), out.rstrip("\n"))

    def test_simulate_hajek(self):
        """Hajek diagnostics on a synthesized stratum"""
        code, out, _ = run(["simulate", "hajek", "--N", "200", "--n", "20", "--lambda", "canonical:3"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Condition satisfied:         yes", out)

    def test_verify_subset(self):
        """A passing subset exits with 0; unknown groups with 2"""
        code, out, _ = run(["verify", "--only", "matrix-kit"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("1 of 1 criteria passed", out)
        code, _, err = run(["verify", "--only", "nothing"])
        self.assertEqual(code, EXIT_ERROR)
        self.assertIn("unknown criterion", err)

    def test_synthesize(self):
        """The synthesized design is written as JSON"""
        path = os.path.join(self.directory, "design.json")
        code, out, _ = run(["synthesize", "--data", "toy_h2", "--output", path])
        self.assertEqual(code, EXIT_OK)
        self.assertIn(path, out)
        with open(path, "r", encoding="utf-8") as file:
            self.assertEqual(json.load(file)["format"], "stratalloc-design")


if __name__ == '__main__':
    unittest.main()
