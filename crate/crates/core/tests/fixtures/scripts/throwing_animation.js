function initializeParams() {
    return { beat: 1 };
}

function dynamicScript(deltaTime, params, parentparams) {
    parentparams.heartScale += params.beat * deltaTime;
    throw new Error("heart stopped");
}
