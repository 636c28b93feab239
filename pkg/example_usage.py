from stratalloc.core.run_config import RunConfig
from stratalloc.run_pipeline import AllocationPipeline

# E-model allocation of 1000 units over the nine forest strata,
# with fourth moments synthesized from Gaussian populations
config = RunConfig(data="table1", model="E", total_n=1000, distribution="gaussian", report="report_output/allocation_report.txt")
pipeline = AllocationPipeline(config)
report, result = pipeline.solve()
print(report)
