import click
import uvicorn

from .engines import ShimConfig
from .service import create_app


@click.command()
@click.option("--generator", "generator_checkpoint", required=True,
              help="Checkpoint id or path for the fill-in generator.")
@click.option("--embedder", "embedder_checkpoint", default=None,
              help="Checkpoint id or path for the embedder (defaults to the generator's encoder).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--max-batch-size", type=int, default=32, show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def main(generator_checkpoint, embedder_checkpoint, device, max_batch_size, port, host):
    """Serve fill-in generation and embeddings over HTTP."""
    config = ShimConfig(
        generator_checkpoint=generator_checkpoint,
        embedder_checkpoint=embedder_checkpoint or generator_checkpoint,
        device=device,
        max_batch_size=max_batch_size,
        port=port,
    )
    app = create_app(config)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
