"""Agent roles and the director/division/expert hierarchy."""

from enum import Enum


class AgentRole(str, Enum):
    NETWORK_DIRECTOR = "NetworkDirector"

    OPTICAL_LAYER_AGENT = "OpticalLayerAgent"
    DT_AGENT = "DtAgent"
    CONTROL_AGENT = "ControlAgent"
    SUPPORT_AGENT = "SupportAgent"

    CONFIGURATION_DEPLOYER = "ConfigurationDeployer"
    DATA_COLLECTOR = "DataCollector"
    PERFORMANCE_SENSOR = "PerformanceSensor"

    MODELING_ENGINEER = "ModelingEngineer"
    VALIDATION_SPECIALIST = "ValidationSpecialist"
    DATA_SCIENTIST = "DataScientist"

    OPERATION_ASSISTANT = "OperationAssistant"
    RESOURCE_COORDINATOR = "ResourceCoordinator"
    STATISTICAL_ANALYST = "StatisticalAnalyst"

    FULL_LIFECYCLE_MANAGER = "FullLifecycleManager"
    FAILURE_HANDLER = "FailureHandler"
    SECURITY_SUPPORTER = "SecuritySupporter"


DIRECTOR = AgentRole.NETWORK_DIRECTOR

DIVISIONS = (
    AgentRole.OPTICAL_LAYER_AGENT,
    AgentRole.DT_AGENT,
    AgentRole.CONTROL_AGENT,
    AgentRole.SUPPORT_AGENT,
)

EXPERTS_BY_DIVISION = {
    AgentRole.OPTICAL_LAYER_AGENT: (
        AgentRole.CONFIGURATION_DEPLOYER,
        AgentRole.DATA_COLLECTOR,
        AgentRole.PERFORMANCE_SENSOR,
    ),
    AgentRole.DT_AGENT: (
        AgentRole.MODELING_ENGINEER,
        AgentRole.VALIDATION_SPECIALIST,
        AgentRole.DATA_SCIENTIST,
    ),
    AgentRole.CONTROL_AGENT: (
        AgentRole.OPERATION_ASSISTANT,
        AgentRole.RESOURCE_COORDINATOR,
        AgentRole.STATISTICAL_ANALYST,
    ),
    AgentRole.SUPPORT_AGENT: (
        AgentRole.FULL_LIFECYCLE_MANAGER,
        AgentRole.FAILURE_HANDLER,
        AgentRole.SECURITY_SUPPORTER,
    ),
}

EXPERTS = tuple(e for experts in EXPERTS_BY_DIVISION.values() for e in experts)


def is_division(role: AgentRole) -> bool:
    return role in DIVISIONS


def is_expert(role: AgentRole) -> bool:
    return role in EXPERTS


def division_of(expert: AgentRole) -> AgentRole:
    for division, experts in EXPERTS_BY_DIVISION.items():
        if expert in experts:
            return division
    raise ValueError(f"{expert.value} is not an expert role")
