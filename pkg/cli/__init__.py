from cli.app import App
from cli.evaluate import EvaluateModule
from cli.infer import InferModule
from cli.summary import SummaryModule
from cli.train import TrainModule


def create_app() -> App:
    app = App(prog="nusg", description="Nested-U salient segmentation toolkit")

    app.add_module(TrainModule())
    app.add_module(EvaluateModule())
    app.add_module(InferModule())
    app.add_module(SummaryModule())

    return app
