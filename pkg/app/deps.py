from app.services.sim_runner_service import RunRegistry, registry


def get_registry() -> RunRegistry:
    """Run registry of this process; tests override it with a fresh one."""
    return registry
